import math

import numpy as np
import pytest

from errors import ValidationError
from gating_agent import (
    GateAgent,
    GateDecision,
    GateSignal,
    gate_decision,
    long_loop_update,
    short_loop_update,
)


def logistic(z):
    return 1.0 / (1.0 + math.exp(-z))


def test_zero_parameters_reject_at_one_half():
    agent = GateAgent(np.zeros(3))
    decision = gate_decision(agent, GateSignal(0.7, 2.0))
    assert decision.probability == 0.5
    assert not decision.accepted
    assert decision.label == "Reject"


def test_saturated_bias_accepts():
    agent = GateAgent(np.array([10.0, 0.0, 0.0]))
    for score, timing in [(0.0, 100.0), (1.0, 0.1), (0.5, 1.0)]:
        decision = gate_decision(agent, GateSignal(score, timing))
        assert decision.accepted
        assert decision.probability > 0.9999


def test_score_weight_example():
    agent = GateAgent(np.array([0.0, 4.0, 0.0]))
    decision = gate_decision(agent, GateSignal(0.5, 3.0))
    assert decision.probability == pytest.approx(logistic(2.0), abs=1e-12)
    assert decision.probability == pytest.approx(0.8808, abs=1e-4)
    assert decision.accepted


def test_signal_validation():
    with pytest.raises(ValidationError) as exc:
        GateSignal(1.5, 1.0)
    assert exc.value.field == "signal.performance_score"
    with pytest.raises(ValidationError) as exc:
        GateSignal(0.5, 0.0)
    assert exc.value.field == "signal.timing"


def test_null_outcome_leaves_theta():
    agent = GateAgent(np.array([0.3, -0.2, 0.1]))
    signal = GateSignal(0.4, 2.0)
    before = agent.theta.copy()
    short_loop_update(agent, signal, 0.0)
    np.testing.assert_array_equal(agent.theta, before)


@pytest.mark.parametrize("outcome, direction", [(1.0, 1), (-1.0, -1)])
def test_short_loop_moves_taken_decision(outcome, direction):
    rng = np.random.default_rng(21)
    for _ in range(100):
        agent = GateAgent(rng.normal(0, 1, size=3), eta_short=float(rng.uniform(0.01, 0.1)))
        signal = GateSignal(float(rng.uniform()), float(rng.uniform(0.5, 5)))
        before = agent.acceptance_probability(signal)
        accept = GateDecision(True, before)
        agent.short_loop_update(signal, accept, outcome)
        after = agent.acceptance_probability(signal)
        assert (after - before) * direction > 0


def test_long_loop_null_and_empty_trace():
    agent = GateAgent(np.array([0.5, 0.5, 0.5]))
    before = agent.theta.copy()
    long_loop_update(agent, 1.0)
    np.testing.assert_array_equal(agent.theta, before)

    agent.decide(GateSignal(0.9, 1.0))
    long_loop_update(agent, 0.0)
    np.testing.assert_array_equal(agent.theta, before)
    long_loop_update(agent, 5.0)
    np.testing.assert_array_equal(agent.theta, before)


def test_long_loop_positive_retro_after_accepting_epoch():
    rng = np.random.default_rng(22)
    agent = GateAgent(np.array([1.0, 1.0, 0.0]), eta_short=0.0, eta_long=0.05)
    signals = [GateSignal(float(rng.uniform(0.8, 1.0)), float(rng.uniform(1, 3))) for _ in range(20)]
    before = [agent.acceptance_probability(s) for s in signals]
    assert all(agent.decide(s).accepted for s in signals)
    long_loop_update(agent, 1.0)
    after = [agent.acceptance_probability(s) for s in signals]
    assert all(a >= b for a, b in zip(after, before))


def test_stationary_without_learning():
    agent = GateAgent(np.array([0.2, -1.0, 0.5]), eta_short=0.0, eta_long=0.0)
    signals = [GateSignal(s, t) for s in (0.1, 0.5, 0.9) for t in (0.5, 1.0, 4.0)]
    first = [agent.decide(s) for s in signals]
    for s, d in zip(signals, first):
        agent.short_loop_update(s, d, 1.0)
    agent.long_loop_update(1.0)
    assert [agent.decide(s) for s in signals] == first


def test_stochastic_mode_is_seeded():
    signals = [GateSignal(0.5, 1.0)] * 50
    a = GateAgent(np.zeros(3), stochastic=True, seed=9)
    b = GateAgent(np.zeros(3), stochastic=True, seed=9)
    decisions = [a.decide(s).accepted for s in signals]
    assert decisions == [b.decide(s).accepted for s in signals]
    assert 0 < sum(decisions) < 50


def test_theta_stays_finite_under_bounded_outcomes():
    rng = np.random.default_rng(23)
    agent = GateAgent(np.zeros(3), eta_short=0.1, eta_long=0.1)
    for epoch in range(200):
        for _ in range(50):
            signal = GateSignal(float(rng.uniform()), float(rng.uniform(0.1, 10)))
            agent.short_loop_update(signal, agent.decide(signal), float(rng.uniform(-1, 1)))
        agent.long_loop_update(float(rng.uniform(-1, 1)))
    assert np.all(np.isfinite(agent.theta))


def test_telemetry_resets():
    agent = GateAgent(np.array([1.0, 0.0, 0.0]))
    signal = GateSignal(0.5, 1.0)
    agent.short_loop_update(signal, agent.decide(signal), 1.0)
    row = agent.telemetry()
    assert row["decisions"] == 1 and row["accept_rate"] == 1.0 and row["mean_outcome"] == 1.0
    assert agent.telemetry()["decisions"] == 0
