import numpy as np
import pytest

from errors import AllWeightsZero, DuplicateVoter, EmptyVoteSet, IneligibleVoter, ValidationError
from governance import Proposal, Vote, tally, votes_from_ledger, weighted_mean

PROPOSAL = Proposal("p-1", "reinstatement", "YDT-00000001", 10)


def test_weighted_mean_examples():
    assert weighted_mean([Vote("a", 1.0, 3.0), Vote("b", 0.0, 1.0)]) == pytest.approx(0.75, abs=1e-12)
    assert weighted_mean([Vote("a", 0.0, 2.0), Vote("b", 1.0, 2.0), Vote("c", 1.0, 2.0)]) == pytest.approx(2 / 3, abs=1e-12)
    assert weighted_mean([Vote("a", 0.4, 5.0)]) == pytest.approx(0.4, abs=1e-12)


def test_weighted_mean_errors():
    with pytest.raises(EmptyVoteSet):
        weighted_mean([])
    with pytest.raises(AllWeightsZero):
        weighted_mean([Vote("a", 1.0, 0.0), Vote("b", 0.0, 0.0)])


def test_vote_ranges():
    with pytest.raises(ValidationError) as exc:
        Vote("a", 1.5, 1.0)
    assert exc.value.field == "vote.value"
    with pytest.raises(ValidationError) as exc:
        Vote("a", 0.5, -1.0)
    assert exc.value.field == "vote.weight"


def test_uniform_weights_equal_arithmetic_mean():
    rng = np.random.default_rng(3)
    for _ in range(100):
        values = rng.uniform(0, 1, size=int(rng.integers(1, 30)))
        c = float(rng.uniform(0.1, 100))
        votes = [Vote(f"v{i}", float(x), c) for i, x in enumerate(values)]
        assert weighted_mean(votes) == pytest.approx(float(np.mean(values)), abs=1e-12)


def test_weighted_mean_matches_brute_force_fold():
    rng = np.random.default_rng(4)
    for _ in range(1000):
        n = int(rng.integers(1, 20))
        values = rng.uniform(0, 1, size=n)
        weights = rng.uniform(0, 1000, size=n)
        weights[0] += 1.0
        numerator = denominator = 0.0
        for x, w in zip(values, weights):
            numerator += w * x
            denominator += w
        votes = [Vote(f"v{i}", float(x), float(w)) for i, (x, w) in enumerate(zip(values, weights))]
        W = weighted_mean(votes)
        assert W == pytest.approx(numerator / denominator, abs=1e-12)
        assert values[weights > 0].min() <= W <= values[weights > 0].max()


def test_weighted_mean_permutation_and_zero_weight():
    rng = np.random.default_rng(5)
    votes = [Vote(f"v{i}", float(rng.uniform()), float(rng.uniform(1, 10))) for i in range(25)]
    W = weighted_mean(votes)
    shuffled = [votes[i] for i in rng.permutation(len(votes))]
    assert weighted_mean(shuffled) == W
    assert weighted_mean(votes + [Vote("zero", 0.0, 0.0)]) == W


@pytest.mark.parametrize("scale", [1e-6, 1.0, 1e6])
def test_decision_invariant_under_weight_scaling(scale):
    rng = np.random.default_rng(6)
    for _ in range(200):
        n = int(rng.integers(1, 15))
        values = rng.integers(0, 2, size=n).astype(float)
        weights = rng.uniform(1, 100, size=n)
        total = float(weights.sum() * rng.uniform(1, 6))
        base = tally(PROPOSAL, [Vote(f"v{i}", x, w) for i, (x, w) in enumerate(zip(values, weights))], total)
        scaled = tally(
            PROPOSAL,
            [Vote(f"v{i}", x, w * scale) for i, (x, w) in enumerate(zip(values, weights))],
            total * scale,
        )
        assert scaled.W == pytest.approx(base.W, abs=1e-12)
        assert scaled.passed == base.passed
        assert scaled.quorum_met == base.quorum_met


def test_tally_unanimous():
    decision = tally(PROPOSAL, [Vote("a", 1.0, 10.0), Vote("b", 1.0, 5.0)], 20.0)
    assert decision.quorum_met and decision.passed
    assert decision.W == 1.0
    assert decision.tick == PROPOSAL.tick


def test_tally_tie_is_rejected():
    decision = tally(PROPOSAL, [Vote("a", 1.0, 1.0), Vote("b", 0.0, 1.0)], 2.0)
    assert decision.W == 0.5
    assert decision.quorum_met and not decision.passed


def test_tally_reputation_dominance():
    votes = [Vote("whale", 1.0, 1000.0), Vote("a", 0.0, 1.0), Vote("b", 0.0, 1.0)]
    decision = tally(PROPOSAL, votes, 1002.0)
    assert decision.W == pytest.approx(1000 / 1002, abs=1e-12)
    assert decision.passed


def test_tally_quorum_missed():
    decision = tally(PROPOSAL, [Vote("a", 1.0, 10.0)], 100.0)
    assert not decision.quorum_met
    assert not decision.passed


def test_tally_rejects_duplicate_and_ineligible_voters():
    with pytest.raises(DuplicateVoter):
        tally(PROPOSAL, [Vote("a", 1.0, 1.0), Vote("a", 0.0, 1.0)], 2.0)
    with pytest.raises(IneligibleVoter):
        tally(PROPOSAL, [Vote("a", 1.0, 1.0)], 2.0, is_eligible=lambda address: address != "a")


def test_tally_leaves_eligibility_to_caller_without_predicate():
    votes = [Vote("active", 1.0, 1.0), Vote("frozen", 1.0, 1.0)]
    assert tally(PROPOSAL, votes, 2.0).passed
    with pytest.raises(IneligibleVoter):
        tally(PROPOSAL, votes, 2.0, is_eligible={"active"}.__contains__)


def test_votes_from_ledger_snapshot(ledger):
    for name, amount in [("a", 300), ("b", 100)]:
        ledger.open_account(name)
        ledger.earn(name, amount, "seed", 0)
    votes = votes_from_ledger([("a", 1), ("b", 0)], ledger)
    ledger.earn("b", 10_000, "late", 1)
    assert [v.weight for v in votes] == [300.0, 100.0]
    assert weighted_mean(votes) == pytest.approx(0.75)


def test_decision_record():
    decision = tally(PROPOSAL, [Vote("a", 1.0, 1.0)], 1.0, tick=12)
    assert decision.to_dict() == {"proposal_id": "p-1", "W": 1.0, "passed": True, "quorum_met": True, "tick": 12}
