"""
Reputation-weighted governance.

Decisions aggregate votes with the weighted arithmetic mean
W = sum(w_i * X_i) / sum(w_i), where w_i is the voter's YDR balance at tally
time. Sums use math.fsum so W does not depend on vote order.
"""

import math
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence

from config import config
from errors import AllWeightsZero, DuplicateVoter, EmptyVoteSet, IneligibleVoter, ValidationError
from logger import logger

log = logger.child("governance")

DEFAULT_QUORUM = float(config.get('governance.quorum', 0.25))
DEFAULT_PASS_THRESHOLD = float(config.get('governance.pass_threshold', 0.5))


@dataclass(frozen=True)
class Vote:
    voter_address: str
    value: float
    weight: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValidationError("vote.value", f"vote value must lie in [0, 1], got {self.value}")
        if self.weight < 0:
            raise ValidationError("vote.weight", f"vote weight must be nonnegative, got {self.weight}")


@dataclass(frozen=True)
class Proposal:
    proposal_id: str
    kind: str
    subject: str = ""
    tick: int = 0


@dataclass(frozen=True)
class GovernanceDecision:
    proposal_id: str
    W: float
    passed: bool
    quorum_met: bool
    tick: int

    def to_dict(self):
        return {
            "proposal_id": self.proposal_id,
            "W": self.W,
            "passed": self.passed,
            "quorum_met": self.quorum_met,
            "tick": self.tick,
        }


def weighted_mean(votes: Sequence[Vote]) -> float:
    if not votes:
        raise EmptyVoteSet("no votes to average")
    total_weight = math.fsum(v.weight for v in votes)
    if total_weight <= 0:
        raise AllWeightsZero("every vote carries zero weight")
    W = math.fsum(v.weight * v.value for v in votes) / total_weight
    # rounding can nudge W a hair outside the value range
    lo = min(v.value for v in votes if v.weight > 0)
    hi = max(v.value for v in votes if v.weight > 0)
    return min(max(W, lo), hi)


def tally(
    proposal: Proposal,
    votes: Sequence[Vote],
    total_active_weight: float,
    *,
    tick: Optional[int] = None,
    is_eligible: Optional[Callable[[str], bool]] = None,
    quorum: float = DEFAULT_QUORUM,
    pass_threshold: float = DEFAULT_PASS_THRESHOLD,
) -> GovernanceDecision:
    """Decide a proposal.

    quorum_met iff the voting weight reaches `quorum` of the active weight;
    passed iff quorum_met and W is strictly above `pass_threshold`.

    Voter eligibility is only enforced through `is_eligible`; when it is None
    the caller must have filtered the votes to active, unfrozen identities.
    """
    tick = proposal.tick if tick is None else tick
    seen = set()
    for vote in votes:
        if vote.voter_address in seen:
            raise DuplicateVoter(f"{vote.voter_address} voted twice on {proposal.proposal_id}", tick=tick)
        seen.add(vote.voter_address)
        if is_eligible is not None and not is_eligible(vote.voter_address):
            raise IneligibleVoter(f"{vote.voter_address} may not vote on {proposal.proposal_id}", tick=tick)

    cast_weight = math.fsum(v.weight for v in votes)
    quorum_met = cast_weight > 0 and cast_weight >= quorum * total_active_weight
    W = weighted_mean(votes) if cast_weight > 0 else 0.0
    passed = quorum_met and W > pass_threshold

    decision = GovernanceDecision(proposal.proposal_id, W, passed, quorum_met, tick)
    log.info(
        f"proposal {proposal.proposal_id} ({proposal.kind}): W={W:.4f} "
        f"quorum={'met' if quorum_met else 'missed'} -> {'passed' if passed else 'rejected'}"
    )
    return decision


def votes_from_ledger(ballots: Iterable[tuple], ledger) -> List[Vote]:
    """Snapshot weights: each (address, value) ballot is weighted by the current balance"""
    return [Vote(address, float(value), float(ledger.balance(address))) for address, value in ballots]
