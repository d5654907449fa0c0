"""
Adaptive admission gate with two feedback loops.

The gate scores a signal with p = logistic(theta0 + theta1*score + theta2/timing).
The short loop nudges theta after each gate-level outcome (a policy-gradient
step on the decision taken); the long loop credits the decisions of a whole
epoch with one retro-signal from the ecosystem.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from config import config
from errors import ValidationError

ETA_SHORT = float(config.get('gating.eta_short', 0.05))
ETA_LONG = float(config.get('gating.eta_long', 0.01))


@dataclass(frozen=True)
class GateSignal:
    performance_score: float
    timing: float

    def __post_init__(self):
        if not 0.0 <= self.performance_score <= 1.0:
            raise ValidationError("signal.performance_score", f"performance score must lie in [0, 1], got {self.performance_score}")
        if not self.timing > 0:
            raise ValidationError("signal.timing", f"timing must be positive, got {self.timing}")

    def features(self) -> np.ndarray:
        return np.array([1.0, self.performance_score, 1.0 / self.timing])


@dataclass(frozen=True)
class GateDecision:
    accepted: bool
    probability: float

    @property
    def label(self) -> str:
        return "Accept" if self.accepted else "Reject"


def _logistic(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


@dataclass
class GateAgent:
    theta: np.ndarray = field(default_factory=lambda: np.zeros(3))
    eta_short: float = ETA_SHORT
    eta_long: float = ETA_LONG
    stochastic: bool = False
    seed: int = 0
    name: str = "gate"

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=np.float64).reshape(3)
        if self.eta_short < 0 or self.eta_long < 0:
            raise ValueError("learning rates must be nonnegative")
        self._rng = np.random.default_rng(self.seed)
        self._trace = np.zeros(3)
        self._trace_count = 0
        # epoch telemetry
        self.decisions = 0
        self.accepts = 0
        self.outcome_sum = 0.0
        self.outcome_count = 0

    def acceptance_probability(self, signal: GateSignal) -> float:
        return float(_logistic(float(self.theta @ signal.features())))

    def grad_log_prob(self, signal: GateSignal, accepted: bool) -> np.ndarray:
        """Gradient of log p(decision) with respect to theta"""
        p = self.acceptance_probability(signal)
        phi = signal.features()
        return (1.0 - p) * phi if accepted else -p * phi

    def decide(self, signal: GateSignal) -> GateDecision:
        p = self.acceptance_probability(signal)
        accepted = bool(self._rng.random() < p) if self.stochastic else p > 0.5
        self._trace += self.grad_log_prob(signal, accepted)
        self._trace_count += 1
        self.decisions += 1
        self.accepts += int(accepted)
        return GateDecision(accepted, p)

    def short_loop_update(self, signal: GateSignal, decision: GateDecision, outcome: float) -> np.ndarray:
        if not np.isfinite(outcome):
            raise ValueError("outcome must be finite")
        self.theta = self.theta + self.eta_short * outcome * self.grad_log_prob(signal, decision.accepted)
        self.outcome_sum += outcome
        self.outcome_count += 1
        return self.theta.copy()

    def long_loop_update(self, retro_signal: float) -> np.ndarray:
        if not np.isfinite(retro_signal):
            raise ValueError("retro-signal must be finite")
        if self._trace_count:
            mean_trace = self._trace / self._trace_count
            self.theta = self.theta + self.eta_long * retro_signal * mean_trace
        self._trace = np.zeros(3)
        self._trace_count = 0
        return self.theta.copy()

    def telemetry(self, reset: bool = True) -> dict:
        row = {
            "theta0": float(self.theta[0]),
            "theta1": float(self.theta[1]),
            "theta2": float(self.theta[2]),
            "accept_rate": self.accepts / self.decisions if self.decisions else 0.0,
            "mean_outcome": self.outcome_sum / self.outcome_count if self.outcome_count else 0.0,
            "decisions": self.decisions,
        }
        if reset:
            self.decisions = self.accepts = self.outcome_count = 0
            self.outcome_sum = 0.0
        return row


def gate_decision(agent: GateAgent, signal: GateSignal) -> GateDecision:
    return agent.decide(signal)


def short_loop_update(agent: GateAgent, signal: GateSignal, outcome: float, decision: Optional[GateDecision] = None) -> np.ndarray:
    """Apply one short-loop step; without an explicit decision, the deterministic one is assumed"""
    if decision is None:
        p = agent.acceptance_probability(signal)
        decision = GateDecision(p > 0.5, p)
    return agent.short_loop_update(signal, decision, outcome)


def long_loop_update(agent: GateAgent, retro_signal: float) -> np.ndarray:
    return agent.long_loop_update(retro_signal)
