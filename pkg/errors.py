"""
Error hierarchy for the DAN simulator.

Every module raises a subclass of DANError. The harness tags errors with the
tick and module they surfaced in before re-raising.
"""

from typing import Optional


class DANError(Exception):
    """Base class for all simulator errors"""

    module: str = "dan"

    def __init__(self, message: str = "", *, tick: Optional[int] = None):
        super().__init__(message)
        self.tick = tick

    def with_context(self, module: Optional[str] = None, tick: Optional[int] = None) -> "DANError":
        if module is not None:
            self.module = module
        if tick is not None:
            self.tick = tick
        return self

    def __str__(self):
        base = super().__str__()
        if self.tick is None:
            return base
        return f"[{self.module} @ tick {self.tick}] {base}"


# identity_registry

class IdentityError(DANError):
    module = "identity_registry"


class DuplicateFace(IdentityError):
    pass


class InvalidProfile(IdentityError):
    pass


class ZeroNormVector(IdentityError):
    pass


class AlreadyBurned(IdentityError):
    pass


class UnknownToken(IdentityError):
    pass


class NotBurned(IdentityError):
    pass


class GovernanceRejected(IdentityError):
    pass


class InvalidQuery(IdentityError):
    pass


# reputation_ledger

class LedgerError(DANError):
    module = "reputation_ledger"


class FrozenAccount(LedgerError):
    pass


class LiquidatedAccount(LedgerError):
    pass


class NonPositiveAmount(LedgerError):
    pass


class InsufficientReputation(LedgerError):
    pass


class UnknownAccount(LedgerError):
    pass


# governance

class GovernanceError(DANError):
    module = "governance"


class AllWeightsZero(GovernanceError):
    pass


class EmptyVoteSet(GovernanceError):
    pass


class DuplicateVoter(GovernanceError):
    pass


class IneligibleVoter(GovernanceError):
    pass


# poa_consensus

class ConsensusError(DANError):
    module = "poa_consensus"


class NoEligibleSealer(ConsensusError):
    pass


class EmptyHeadSet(ConsensusError):
    pass


class StalledChain(ConsensusError):
    pass


# econodynamics

class EconodynamicsError(DANError):
    module = "econodynamics"


class InvalidDistribution(EconodynamicsError):
    pass


# tensor_kernel

class TensorError(DANError):
    module = "tensor_kernel"


class ShapeMismatch(TensorError):
    pass


class NonScalarLoss(TensorError):
    pass


class NonFiniteValue(TensorError):
    pass


# ynet_forecaster

class ForecastError(DANError):
    module = "ynet_forecaster"


class NegativeEntry(ForecastError):
    pass


class TemporalUnderflow(ForecastError):
    pass


class DivergedLoss(ForecastError):
    pass


class InvalidModelConfig(ForecastError):
    pass


# sim_harness

class ScenarioError(DANError):
    module = "sim_harness"


class ParseError(ScenarioError):
    pass


class ValidationError(ScenarioError):
    """Scenario field failed validation; `field` is the dotted path"""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class IoError(DANError):
    """Artifact export failed"""

    module = "sim_harness"
