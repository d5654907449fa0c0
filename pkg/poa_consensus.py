"""
Proof-of-Authority consensus over a simulated network.

Validators are accounts holding more than the validator threshold of YDR.
Sealing rotates round-robin over the sorted validator addresses and never lets
one validator seal two consecutive blocks. A block finalizes once more than half
of the validators have acknowledged it; sealers earn YDR for finalized blocks
and are slashed for provable violations (invalid blocks, equivocation).
"""

import hashlib
import heapq
import json
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from config import config
from errors import EmptyHeadSet, NoEligibleSealer, StalledChain, ValidationError
from logger import logger
from reputation_ledger import ReputationLedger

log = logger.child("consensus")

R_SEAL = int(config.get('consensus.reward_seal', 10))
S_SLASH = int(config.get('consensus.slash', 100))
EPOCH_BLOCKS = int(config.get('consensus.epoch_blocks', 10))
MIN_VALIDATORS = int(config.get('consensus.min_validators', 23))
ROUND_TIMEOUT = int(config.get('consensus.round_timeout', 10))
MAX_FAILED_ROUNDS = int(config.get('consensus.max_failed_rounds', 50))


def _content_hash(payload: dict) -> str:
    """64-bit stable content hash, hex encoded"""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.blake2b(blob, digest_size=8).hexdigest()


@dataclass(frozen=True)
class Block:
    height: int
    parent_id: Optional[str]
    sealer: Optional[str]
    tx_ids: Tuple[str, ...]
    tick: int
    block_id: str

    @staticmethod
    def compute_id(height, parent_id, sealer, tx_ids, tick) -> str:
        return _content_hash({
            "height": height,
            "parent_id": parent_id,
            "sealer": sealer,
            "tx_ids": list(tx_ids),
            "tick": tick,
        })

    @classmethod
    def seal(cls, height: int, parent_id: Optional[str], sealer: Optional[str], tx_ids: Iterable[str], tick: int) -> "Block":
        tx_ids = tuple(tx_ids)
        return cls(height, parent_id, sealer, tx_ids, tick, cls.compute_id(height, parent_id, sealer, tx_ids, tick))

    def recompute_id(self) -> str:
        return self.compute_id(self.height, self.parent_id, self.sealer, self.tx_ids, self.tick)

    def to_dict(self) -> dict:
        return {
            "block_id": self.block_id,
            "height": self.height,
            "parent_id": self.parent_id,
            "sealer": self.sealer,
            "tx_count": len(self.tx_ids),
            "tick": self.tick,
        }


def genesis_block() -> Block:
    return Block.seal(0, None, None, (), 0)


@dataclass(frozen=True)
class ValidatorSet:
    addresses: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "addresses", tuple(sorted(set(self.addresses))))

    @classmethod
    def from_ledger(cls, candidates: Iterable[str], ledger: ReputationLedger) -> "ValidatorSet":
        return cls(tuple(a for a in candidates if ledger.is_validator_eligible(a)))

    @property
    def below_recommended(self) -> bool:
        return len(self.addresses) < MIN_VALIDATORS

    def __len__(self):
        return len(self.addresses)

    def __iter__(self):
        return iter(self.addresses)

    def __contains__(self, address):
        return address in self.addresses

    def __getitem__(self, i):
        return self.addresses[i]


@dataclass(frozen=True)
class NetworkConfig:
    latency_min: int = 1
    latency_max: int = 3
    drop_probability: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_probability <= 1.0:
            raise ValidationError("network.drop_probability", f"drop probability must lie in [0, 1], got {self.drop_probability}")
        if not 0 <= self.latency_min <= self.latency_max:
            raise ValidationError("network.latency_min", "latency bounds must satisfy 0 <= min <= max")


class Verdict(str, Enum):
    OK = "Ok"
    UNKNOWN_PARENT = "UnknownParent"
    INELIGIBLE_SEALER = "IneligibleSealer"
    CONSECUTIVE_SEALER = "ConsecutiveSealer"
    BAD_HEIGHT = "BadHeight"
    BAD_HASH = "BadHash"
    EQUIVOCATION = "Equivocation"


class FaultKind(str, Enum):
    EQUIVOCATION = "equivocation"
    INVALID_BLOCK = "invalid_block"


@dataclass
class ConsensusParams:
    reward_seal: int = R_SEAL
    slash: int = S_SLASH
    epoch_blocks: int = EPOCH_BLOCKS
    round_timeout: int = ROUND_TIMEOUT
    max_failed_rounds: int = MAX_FAILED_ROUNDS
    trace_messages: bool = True
    faults: Dict[str, FaultKind] = field(default_factory=dict)
    fault_probability: float = 1.0


@dataclass(frozen=True)
class BlockEffect:
    kind: str
    address: str
    amount: int
    balance: int


class ChainState:
    """Finalized chain: every block here was acknowledged by a majority"""

    def __init__(self):
        self.genesis = genesis_block()
        self.blocks: Dict[str, Block] = {self.genesis.block_id: self.genesis}
        self.by_height: Dict[int, str] = {0: self.genesis.block_id}
        self._children: Dict[str, List[str]] = {self.genesis.block_id: []}

    def __contains__(self, block_id):
        return block_id in self.blocks

    def get(self, block_id: str) -> Block:
        return self.blocks[block_id]

    def add(self, block: Block) -> None:
        if block.parent_id not in self.blocks:
            raise KeyError(f"parent {block.parent_id} is not part of the chain")
        self.blocks[block.block_id] = block
        self._children.setdefault(block.block_id, [])
        self._children[block.parent_id].append(block.block_id)
        self.by_height.setdefault(block.height, block.block_id)

    def heads(self) -> List[Block]:
        return [self.blocks[b] for b, kids in self._children.items() if not kids]

    @property
    def head(self) -> Block:
        return self.get(fork_choice(self.heads()))

    @property
    def height(self) -> int:
        return self.head.height


class ChainTrace:
    """Ordered consensus events; exported as JSON lines"""

    def __init__(self):
        self.events: List[dict] = []
        self.finalized: List[Block] = []
        self.violations: List[dict] = []
        self.seal_counts: Counter = Counter()
        self.rounds = 0
        self.failed_rounds = 0

    def record(self, kind: str, tick: int, **fields) -> dict:
        event = {"seq": len(self.events), "kind": kind, "tick": tick, **fields}
        self.events.append(event)
        return event

    def lines(self) -> Iterable[str]:
        for event in self.events:
            yield json.dumps(event, sort_keys=True, separators=(",", ":"))

    def to_jsonl(self, path) -> Path:
        path = Path(path)
        with open(path, 'w', encoding='utf-8') as f:
            for line in self.lines():
                f.write(line + "\n")
        return path

    def count(self, kind: str) -> int:
        return sum(1 for e in self.events if e["kind"] == kind)


def next_sealer(validators: Union[ValidatorSet, Sequence[str]], height: int, last_sealer: Optional[str]) -> str:
    addresses = tuple(validators)
    n = len(addresses)
    if n == 0:
        raise NoEligibleSealer("validator set is empty")
    candidate = addresses[height % n]
    if candidate != last_sealer:
        return candidate
    if n == 1:
        raise NoEligibleSealer(f"{candidate} sealed the previous block and is the only validator")
    return addresses[(height + 1) % n]


def validate_block(
    block: Block,
    chain_state: ChainState,
    validators: Union[ValidatorSet, Sequence[str]],
    ledger: Optional[ReputationLedger] = None,
) -> Verdict:
    if block.parent_id not in chain_state:
        return Verdict.UNKNOWN_PARENT
    parent = chain_state.get(block.parent_id)
    if block.sealer not in validators:
        return Verdict.INELIGIBLE_SEALER
    if ledger is not None and not ledger.is_validator_eligible(block.sealer):
        return Verdict.INELIGIBLE_SEALER
    if block.sealer == parent.sealer:
        return Verdict.CONSECUTIVE_SEALER
    if block.height != parent.height + 1:
        return Verdict.BAD_HEIGHT
    if block.block_id != block.recompute_id():
        return Verdict.BAD_HASH
    return Verdict.OK


def apply_block(
    block: Block,
    ledger: ReputationLedger,
    violation: Optional[Verdict] = None,
    *,
    tick: Optional[int] = None,
    reward: int = R_SEAL,
    penalty: int = S_SLASH,
) -> BlockEffect:
    """Reward the sealer of a finalized block, or slash it for a proven violation"""
    tick = block.tick if tick is None else tick
    sealer = block.sealer
    account = ledger.account(sealer)
    if violation is None or violation is Verdict.OK:
        balance = ledger.earn(sealer, reward, "seal", tick)
        return BlockEffect("reward", sealer, reward, balance)
    if account.liquidated:
        return BlockEffect("slash", sealer, 0, account.balance)
    before = account.balance
    balance = ledger.slash(sealer, penalty, f"violation:{violation.value}", tick)
    return BlockEffect("slash", sealer, before - balance, balance)


def fork_choice(heads: Sequence[Block]) -> str:
    """Greatest height wins; ties go to the lexicographically smallest block id"""
    if not heads:
        raise EmptyHeadSet("no chain tips to choose from")
    best = min(heads, key=lambda b: (-b.height, b.block_id))
    return best.block_id


class ConsensusEngine:
    """Runs PoA rounds against a ledger; each round is a small discrete-event simulation"""

    def __init__(
        self,
        candidates: Union[Callable[[], Iterable[str]], Iterable[str]],
        ledger: ReputationLedger,
        network: NetworkConfig = NetworkConfig(),
        params: Optional[ConsensusParams] = None,
        trace: Optional[ChainTrace] = None,
    ):
        if callable(candidates):
            self._candidates = candidates
        else:
            fixed = tuple(candidates)
            self._candidates = lambda: fixed
        self.ledger = ledger
        self.network = network
        self.params = params or ConsensusParams()
        self.chain = ChainState()
        self.trace = trace or ChainTrace()
        self.rng = np.random.default_rng(network.seed)
        self.validators = ValidatorSet(())
        self._since_epoch = 0
        self._attempt = 0
        self.refresh_validators(tick=0)

    def refresh_validators(self, tick: int) -> ValidatorSet:
        self.validators = ValidatorSet.from_ledger(self._candidates(), self.ledger)
        self._since_epoch = 0
        self.trace.record("epoch", tick, validators=len(self.validators), below_recommended=self.validators.below_recommended)
        if self.validators.below_recommended:
            log.warning(f"only {len(self.validators)} validators (recommended minimum {MIN_VALIDATORS})")
        return self.validators

    def _violation(self, violations: dict, block: Block, kind: Verdict, tick: int, at: int):
        key = (block.sealer, block.height, kind)
        if key in violations:
            return
        violations[key] = block
        event = self.trace.record("violation", tick, at=at, kind_of=kind.value, sealer=block.sealer,
                                  height=block.height, block_id=block.block_id)
        self.trace.violations.append(event)
        log.warning(f"{kind.value} by {block.sealer} at height {block.height}")

    def _proposals(self, height: int, parent: Block, sealer: str, tx_ids: Tuple[str, ...], tick: int) -> List[Block]:
        block = Block.seal(height, parent.block_id, sealer, tx_ids, tick)
        fault = self.params.faults.get(sealer)
        if fault is None or self.rng.random() >= self.params.fault_probability:
            return [block]
        if FaultKind(fault) is FaultKind.INVALID_BLOCK:
            forged = Block(block.height, block.parent_id, block.sealer, block.tx_ids, block.tick, block.block_id[::-1])
            return [forged]
        twin = Block.seal(height, parent.block_id, sealer, tx_ids + ("equivocation",), tick)
        return [block, twin]

    def run_round(self, tick: int, tx_ids: Iterable[str] = ()) -> Optional[Block]:
        """One proposal round; returns the finalized block or None"""
        params, trace = self.params, self.trace
        vset = self.validators
        parent = self.chain.head
        height = parent.height + 1
        sealer = next_sealer(vset, height + self._attempt, parent.sealer)
        proposals = self._proposals(height, parent, sealer, tuple(tx_ids), tick)
        trace.rounds += 1
        for b in proposals:
            trace.record("proposal", tick, block_id=b.block_id, height=height, sealer=sealer, attempt=self._attempt)

        verdicts = {b.block_id: validate_block(b, self.chain, vset, self.ledger) for b in proposals}
        violations: Dict[tuple, Block] = {}
        for b in proposals:
            if verdicts[b.block_id] is not Verdict.OK:
                self._violation(violations, b, verdicts[b.block_id], tick, tick)

        peers = [v for v in vset if v != sealer]
        n_msgs = len(peers) * len(proposals)
        lo, hi = self.network.latency_min, self.network.latency_max
        drop_p = self.network.drop_probability
        deliver_drop = self.rng.random(n_msgs)
        deliver_lat = self.rng.integers(lo, hi + 1, size=n_msgs)
        ack_drop = self.rng.random(n_msgs)
        ack_lat = self.rng.integers(lo, hi + 1, size=n_msgs)

        acks: Dict[str, set] = {b.block_id: set() for b in proposals}
        if verdicts[proposals[0].block_id] is Verdict.OK:
            acks[proposals[0].block_id].add(sealer)

        queue = []
        seq = 0
        for i, peer in enumerate(peers):
            order = proposals if i % 2 == 0 else proposals[::-1]
            for j, b in enumerate(order):
                m = i * len(proposals) + j
                if deliver_drop[m] < drop_p:
                    if params.trace_messages:
                        trace.record("drop", tick, at=tick, block_id=b.block_id, to=peer)
                    continue
                heapq.heappush(queue, (tick + int(deliver_lat[m]), seq, "deliver", peer, b, m))
                seq += 1

        deadline = tick + params.round_timeout
        majority = len(vset) // 2 + 1
        voted: Dict[str, str] = {}
        finalized: Optional[Block] = None
        first_id = proposals[0].block_id
        if len(acks[first_id]) >= majority:
            # a lone validator finalizes on its own attestation
            finalized = proposals[0]
            trace.record("finalization", tick, at=tick, block_id=first_id, height=height,
                         sealer=sealer, acks=len(acks[first_id]))
        while queue:
            at, _, kind, peer, b, m = heapq.heappop(queue)
            if at > deadline:
                break
            if kind == "deliver":
                if params.trace_messages:
                    trace.record("delivery", tick, at=at, block_id=b.block_id, to=peer)
                if verdicts[b.block_id] is not Verdict.OK:
                    continue
                first = voted.get(peer)
                if first is None:
                    voted[peer] = b.block_id
                    if ack_drop[m] < drop_p:
                        continue
                    heapq.heappush(queue, (at + int(ack_lat[m]), seq, "ack", peer, b, m))
                    seq += 1
                elif first != b.block_id:
                    self._violation(violations, b, Verdict.EQUIVOCATION, tick, at)
            else:
                acks[b.block_id].add(peer)
                if params.trace_messages:
                    trace.record("attestation", tick, at=at, block_id=b.block_id, by=peer)
                if finalized is None and len(acks[b.block_id]) >= majority:
                    finalized = b
                    trace.record("finalization", tick, at=at, block_id=b.block_id, height=height,
                                 sealer=sealer, acks=len(acks[b.block_id]))

        for (_, _, kind), b in violations.items():
            effect = apply_block(b, self.ledger, kind, tick=tick, penalty=params.slash)
            trace.record("slash", tick, address=effect.address, amount=effect.amount, balance=effect.balance,
                         reason=kind.value)

        if finalized is None:
            trace.failed_rounds += 1
            trace.record("round_failed", tick, height=height, sealer=sealer, attempt=self._attempt)
            self._attempt += 1
            return None

        self.chain.add(finalized)
        trace.finalized.append(finalized)
        trace.seal_counts[sealer] += 1
        effect = apply_block(finalized, self.ledger, tick=tick, reward=params.reward_seal)
        trace.record("reward", tick, address=effect.address, amount=effect.amount, balance=effect.balance)
        self._attempt = 0
        self._since_epoch += 1
        if self._since_epoch >= params.epoch_blocks:
            self.refresh_validators(tick)
        return finalized

    def produce_block(self, tick: int, tx_ids: Iterable[str] = ()) -> Block:
        """Run rounds until a block finalizes, or raise StalledChain"""
        tx_ids = tuple(tx_ids)
        for failures in range(self.params.max_failed_rounds):
            block = self.run_round(tick + failures * self.params.round_timeout, tx_ids)
            if block is not None:
                return block
        raise StalledChain(
            f"no block finalized within {self.params.max_failed_rounds} rounds at height {self.chain.height + 1}",
            tick=tick,
        )


def simulate_consensus(
    validators: Union[ValidatorSet, Iterable[str]],
    network: NetworkConfig,
    n_blocks: int,
    ledger: ReputationLedger,
    params: Optional[ConsensusParams] = None,
) -> ChainTrace:
    if n_blocks < 1:
        raise ValidationError("n_blocks", "must be at least 1")
    engine = ConsensusEngine(tuple(validators), ledger, network, params)
    step = engine.params.round_timeout
    tick = 0
    for _ in range(n_blocks):
        tick += step
        block = engine.produce_block(tick, ())
        tick = max(tick, block.tick)
    log.info(
        f"simulated {n_blocks} blocks: {engine.trace.rounds} rounds, "
        f"{engine.trace.failed_rounds} failed, {len(engine.trace.violations)} violations"
    )
    return engine.trace
