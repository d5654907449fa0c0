import time

import pytest

from errors import EmptyHeadSet, NoEligibleSealer, StalledChain, ValidationError
from poa_consensus import (
    Block,
    ChainState,
    ConsensusEngine,
    ConsensusParams,
    FaultKind,
    NetworkConfig,
    ValidatorSet,
    Verdict,
    apply_block,
    fork_choice,
    genesis_block,
    next_sealer,
    simulate_consensus,
    validate_block,
)
from reputation_ledger import ReputationLedger


def funded_ledger(n: int, amount: int = 1_500_000):
    ledger = ReputationLedger()
    addresses = [f"0xval{i:03d}" for i in range(n)]
    for a in addresses:
        ledger.open_account(a)
        ledger.earn(a, amount, "bootstrap", 0)
    return ledger, addresses


def test_next_sealer_examples():
    assert next_sealer(["A", "B", "C"], 3, "C") == "A"
    assert next_sealer(["A", "B"], 2, "A") == "B"
    with pytest.raises(NoEligibleSealer):
        next_sealer(["A"], 5, "A")
    with pytest.raises(NoEligibleSealer):
        next_sealer([], 1, None)


def test_next_sealer_never_repeats():
    validators = ["A", "B", "C", "D"]
    last = None
    for height in range(1, 200):
        sealer = next_sealer(validators, height * 7, last)
        assert sealer != last
        last = sealer


def test_validator_set_sorted_and_deduplicated():
    vset = ValidatorSet(("c", "a", "b", "a"))
    assert vset.addresses == ("a", "b", "c")
    assert vset.below_recommended


def test_validator_set_from_ledger():
    ledger, addresses = funded_ledger(3)
    ledger.open_account("poor")
    ledger.earn("poor", 900_000, "seed", 0)
    assert ValidatorSet.from_ledger(addresses + ["poor"], ledger).addresses == tuple(addresses)


def test_block_id_is_content_hash():
    a = Block.seal(1, "p", "A", ("t1",), 5)
    b = Block.seal(1, "p", "A", ("t1",), 5)
    c = Block.seal(1, "p", "A", ("t2",), 5)
    assert a.block_id == b.block_id != c.block_id
    assert len(a.block_id) == 16
    g = genesis_block()
    assert g.height == 0 and g.sealer is None and g.parent_id is None


def test_validate_block():
    ledger, (a, b, c) = funded_ledger(3)
    chain = ChainState()
    vset = ValidatorSet((a, b, c))
    first = Block.seal(1, chain.genesis.block_id, a, (), 1)
    assert validate_block(first, chain, vset, ledger) is Verdict.OK
    chain.add(first)

    assert validate_block(Block.seal(2, first.block_id, a, (), 2), chain, vset) is Verdict.CONSECUTIVE_SEALER
    assert validate_block(Block.seal(2, "missing", b, (), 2), chain, vset) is Verdict.UNKNOWN_PARENT
    assert validate_block(Block.seal(3, first.block_id, b, (), 2), chain, vset) is Verdict.BAD_HEIGHT
    good = Block.seal(2, first.block_id, b, (), 2)
    forged = Block(good.height, good.parent_id, good.sealer, ("injected",), good.tick, good.block_id)
    assert validate_block(forged, chain, vset) is Verdict.BAD_HASH


def test_validate_block_ineligible_sealer():
    ledger, (a, b) = funded_ledger(2)
    ledger.open_account("poor")
    ledger.earn("poor", 900_000, "seed", 0)
    chain = ChainState()
    block = Block.seal(1, chain.genesis.block_id, "poor", (), 1)
    assert validate_block(block, chain, ValidatorSet((a, b))) is Verdict.INELIGIBLE_SEALER
    assert validate_block(block, chain, ("poor", a), ledger) is Verdict.INELIGIBLE_SEALER


def test_apply_block_reward_and_slash():
    ledger, (a,) = funded_ledger(1, 1_000_050)
    block = Block.seal(1, genesis_block().block_id, a, (), 1)
    assert apply_block(block, ledger, reward=10).balance == 1_000_060
    effect = apply_block(block, ledger, Verdict.EQUIVOCATION, penalty=100)
    assert effect.kind == "slash" and effect.amount == 100
    assert ledger.balance(a) == 999_960

    ledger, (b,) = funded_ledger(1, 1_000_050)
    apply_block(Block.seal(1, "p", b, (), 1), ledger, Verdict.EQUIVOCATION, penalty=100)
    assert ledger.balance(b) == 999_950
    assert b not in ValidatorSet.from_ledger([b], ledger)


def test_apply_block_slash_floor():
    ledger = ReputationLedger()
    ledger.open_account("z")
    effect = apply_block(Block.seal(1, "p", "z", (), 1), ledger, Verdict.BAD_HASH, penalty=100)
    assert effect.amount == 0 and ledger.balance("z") == 0


def test_fork_choice():
    low = Block(5, "p", "A", (), 1, "ff")
    high = Block(7, "p", "B", (), 1, "ee")
    assert fork_choice([low, high]) == "ee"
    assert fork_choice([Block(3, "p", "A", (), 1, "0b"), Block(3, "p", "B", (), 1, "0a")]) == "0a"
    assert fork_choice([low]) == "ff"
    with pytest.raises(EmptyHeadSet):
        fork_choice([])


def test_honest_round_robin_230_blocks():
    ledger, addresses = funded_ledger(23)
    trace = simulate_consensus(addresses, NetworkConfig(seed=1), 230, ledger)
    assert len(trace.finalized) == 230
    assert all(trace.seal_counts[a] == 10 for a in addresses)
    assert trace.violations == []
    assert all(ledger.balance(a) == 1_500_000 + 10 * 10 for a in addresses)


def test_finalized_chain_properties():
    ledger, addresses = funded_ledger(7)
    trace = simulate_consensus(addresses, NetworkConfig(1, 4, 0.2, seed=3), 100, ledger)
    heights = [b.height for b in trace.finalized]
    assert heights == list(range(1, 101))
    for parent, child in zip(trace.finalized, trace.finalized[1:]):
        assert child.parent_id == parent.block_id
        assert child.sealer != parent.sealer


def test_all_messages_dropped_stalls():
    ledger, addresses = funded_ledger(5)
    with pytest.raises(StalledChain):
        simulate_consensus(addresses, NetworkConfig(drop_probability=1.0), 1, ledger,
                           ConsensusParams(max_failed_rounds=5))


def test_trace_is_deterministic():
    def lines(seed):
        ledger, addresses = funded_ledger(9)
        trace = simulate_consensus(addresses, NetworkConfig(1, 3, 0.1, seed=seed), 40, ledger)
        return list(trace.lines())

    assert lines(5) == lines(5)
    assert lines(5) != lines(6)


def test_equivocation_is_detected_and_slashed():
    ledger, addresses = funded_ledger(5, 1_000_050)
    faulty = addresses[0]
    params = ConsensusParams(faults={faulty: FaultKind.EQUIVOCATION}, epoch_blocks=5)
    engine = ConsensusEngine(addresses, ledger, NetworkConfig(seed=2), params)
    for t in range(1, 11):
        engine.produce_block(t * 10)
    kinds = {(v["kind_of"], v["sealer"]) for v in engine.trace.violations}
    assert ("Equivocation", faulty) in kinds
    assert faulty not in engine.validators
    assert ledger.balance(faulty) < 1_000_050


def test_invalid_block_fault_fails_round_and_chain_recovers():
    ledger, addresses = funded_ledger(5)
    faulty = addresses[1]
    params = ConsensusParams(faults={faulty: FaultKind.INVALID_BLOCK})
    trace = simulate_consensus(addresses, NetworkConfig(seed=4), 20, ledger, params)
    assert len(trace.finalized) == 20
    assert trace.failed_rounds >= 1
    assert all(b.sealer != faulty for b in trace.finalized)
    assert {v["kind_of"] for v in trace.violations} == {"BadHash"}
    assert ledger.balance(faulty) < 1_500_000


def test_trace_jsonl_export(tmp_path):
    ledger, addresses = funded_ledger(3)
    trace = simulate_consensus(addresses, NetworkConfig(seed=0), 3, ledger)
    path = trace.to_jsonl(tmp_path / "trace.jsonl")
    kinds = {line.split('"kind":"')[1].split('"')[0] for line in path.read_text().splitlines()}
    assert {"proposal", "delivery", "attestation", "finalization", "reward"} <= kinds


@pytest.mark.slow
def test_ten_thousand_block_fairness():
    ledger, addresses = funded_ledger(23)
    params = ConsensusParams(trace_messages=False)
    started = time.perf_counter()
    trace = simulate_consensus(addresses, NetworkConfig(seed=42), 10_000, ledger, params)
    elapsed = time.perf_counter() - started
    counts = [trace.seal_counts[a] for a in addresses]
    assert sum(counts) == 10_000
    assert max(counts) - min(counts) <= 1
    assert all(abs(c - 10_000 / 23) <= 1 for c in counts)
    assert trace.violations == []
    assert elapsed < 10.0


def lone_validator_ledger():
    ledger = ReputationLedger()
    ledger.open_account("A")
    ledger.earn("A", 2_000_000, "bootstrap", 0)
    return ledger


def test_network_config_validation():
    with pytest.raises(ValidationError) as exc:
        NetworkConfig(drop_probability=1.5)
    assert exc.value.field == "network.drop_probability"
    with pytest.raises(ValidationError) as exc:
        NetworkConfig(latency_min=4, latency_max=2)
    assert exc.value.field == "network.latency_min"


def test_single_validator_finalizes_on_own_attestation():
    ledger = lone_validator_ledger()
    trace = simulate_consensus(["A"], NetworkConfig(seed=1), 1, ledger)
    assert [(b.height, b.sealer) for b in trace.finalized] == [(1, "A")]
    assert trace.failed_rounds == 0
    assert ledger.balance("A") == 2_000_000 + 10


def test_single_validator_finalizes_with_every_message_dropped():
    ledger = lone_validator_ledger()
    engine = ConsensusEngine(("A",), ledger, NetworkConfig(drop_probability=1.0, seed=3))
    block = engine.produce_block(10)
    assert block.height == 1 and block.sealer == "A"
    assert [e for e in engine.trace.events if e["kind"] == "finalization"][0]["acks"] == 1


def test_single_validator_cannot_seal_twice_in_a_row():
    ledger = lone_validator_ledger()
    engine = ConsensusEngine(("A",), ledger, NetworkConfig(seed=1))
    assert engine.produce_block(10).sealer == "A"
    with pytest.raises(NoEligibleSealer):
        engine.produce_block(20)
    assert engine.chain.height == 1


def test_two_validators_alternate_strictly():
    ledger, addresses = funded_ledger(2)
    engine = ConsensusEngine(addresses, ledger, NetworkConfig(seed=5))
    for t in range(1, 21):
        engine.produce_block(t * 10)
    sealers = [b.sealer for b in engine.trace.finalized]
    assert len(sealers) == 20
    assert all(a != b for a, b in zip(sealers, sealers[1:]))
    assert engine.trace.seal_counts[addresses[0]] == 10
    assert engine.trace.seal_counts[addresses[1]] == 10
