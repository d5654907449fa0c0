"""
Scenario runner for the DAN simulator.

One Simulation wires identities, the YDR ledger, governance, PoA consensus,
econodynamics accounting, per-community gating agents and per-community
forecasters into a single-threaded tick loop. Every random draw comes from a
named substream of the master seed, so a scenario and seed fully determine
every exported byte.
"""

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from econodynamics import (
    HoldingsDistribution,
    SpeciesTerm,
    classify_game,
    enthalpy_of_atomization,
    enthalpy_of_reaction,
    entropy,
    gini,
    wealth_histogram,
)
from errors import DANError, IoError
from gating_agent import GateAgent, GateSignal
from governance import Proposal, tally, votes_from_ledger
from graph_dataset import ForecastSample, GraphDataset, GraphSequence
from identity_registry import IdentityRegistry, random_face, random_profile
from logger import logger
from poa_consensus import ChainTrace, ConsensusEngine, ConsensusParams, FaultKind, NetworkConfig
from reputation_ledger import ReputationLedger
from scenario import Scenario
from tensor_kernel import save_tensors
from ynet_forecaster import ModelConfig, TrainConfig, YIdentityNet, evaluate, train

log = logger.child("harness")

STREAMS = ("identity", "ydr", "network", "interaction", "gating", "governance", "forecaster")

METRIC_COLUMNS = [
    "epoch", "tick", "chain_height", "blocks_finalized", "rounds", "finalization_rate",
    "validators", "seal_count_min", "seal_count_max", "violations",
    "ydr_total", "conservation_ok", "gini", "entropy", "histogram",
    "dh_formation", "dh_atomization", "dh_dissolved",
    "transactions", "rejected", "satisfied", "payoff_total", "game_class", "ponzi_suspect",
    "active_identities", "burned", "reinstated",
    "gate_accept_rate", "gate_mean_outcome", "gate_theta0", "gate_theta1", "gate_theta2",
    "forecast_trained", "forecaster_mse", "baseline_mse",
]

ARTIFACTS = {
    "metrics": "metrics.csv",
    "trace": "trace.jsonl",
    "events": "events.jsonl",
    "loss": "loss.csv",
    "model": "model.ckpt",
    "ledger": "ledger.csv",
    "registry": "registry.json",
}


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator per named concern, derived from the master seed"""
    tag = int.from_bytes(hashlib.blake2b(name.encode(), digest_size=8).digest(), "little")
    return np.random.default_rng([seed, tag])


@dataclass
class MetricsReport:
    rows: List[dict] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=METRIC_COLUMNS)

    def export_csv(self, path) -> Path:
        path = Path(path)
        self.to_frame().to_csv(path, index=False)
        return path

    @staticmethod
    def read_csv(path) -> pd.DataFrame:
        return pd.read_csv(path, float_precision="round_trip", keep_default_na=False)


@dataclass
class EventLog:
    events: List[dict] = field(default_factory=list)

    def record(self, kind: str, tick: int, **fields) -> None:
        self.events.append({"seq": len(self.events), "kind": kind, "tick": tick, **fields})

    def of_kind(self, kind: str) -> List[dict]:
        return [e for e in self.events if e["kind"] == kind]

    def to_jsonl(self, path) -> Path:
        path = Path(path)
        with open(path, 'w', encoding='utf-8') as f:
            for event in self.events:
                f.write(json.dumps(event, sort_keys=True, separators=(",", ":")) + "\n")
        return path


@dataclass
class RunResult:
    scenario: Scenario
    report: MetricsReport
    trace: ChainTrace
    events: EventLog
    ledger: ReputationLedger
    registry: IdentityRegistry
    models: Dict[int, YIdentityNet]
    losses: List[dict]


class Simulation:
    def __init__(self, scenario: Scenario):
        s = self.scenario = scenario
        self.rng = {name: substream(s.seed, name) for name in STREAMS}
        self.ledger = ReputationLedger()
        self.registry = IdentityRegistry(self.ledger)
        self.events = EventLog()
        self.report = MetricsReport()
        self.losses: List[dict] = []

        self.slots: List[str] = []
        for i in range(s.population):
            token = self.registry.mint_identity(random_profile(self.rng["identity"]), random_face(self.rng["identity"]), 0)
            self.slots.append(token.owner_address)
            self.events.record("mint", 0, slot=i, token_id=token.token_id, address=token.owner_address)
        self._allocate()

        self.communities = [[int(i) for i in c] for c in np.array_split(np.arange(s.population), s.communities)]
        self.community_of = {slot: k for k, members in enumerate(self.communities) for slot in members}

        self.gates = [
            GateAgent(np.array(s.gating.theta, dtype=np.float64), s.gating.eta_short, s.gating.eta_long,
                      s.gating.stochastic, int(self.rng["gating"].integers(2**32)), f"gate-{k}")
            for k in range(s.communities)
        ]

        c = s.consensus
        network = NetworkConfig(s.network.latency_min, s.network.latency_max, s.network.drop_probability,
                                int(self.rng["network"].integers(2**63)))
        params = ConsensusParams(
            reward_seal=c.reward_seal, slash=c.slash, epoch_blocks=c.epoch_blocks,
            round_timeout=c.round_timeout, max_failed_rounds=c.max_failed_rounds,
            trace_messages=c.trace_messages, fault_probability=c.fault_probability,
            faults={self.slots[int(i)]: FaultKind(kind) for i, kind in sorted(c.faults.items())},
        )
        self.engine = ConsensusEngine(self.registry.active_addresses, self.ledger, network, params)

        self.models: Dict[int, YIdentityNet] = {}
        if s.forecaster.enabled:
            f = s.forecaster
            for k, members in enumerate(self.communities):
                self.models[k] = YIdentityNet(ModelConfig(
                    n_nodes=len(members), in_channels=2, history=f.history, horizon=f.horizon,
                    hidden=f.hidden, blocks=f.blocks, kernel_size=f.kernel_size,
                    diffusion_steps=f.diffusion_steps, seed=int(self.rng["forecaster"].integers(2**32)),
                ))
        self.snapshots_V: List[np.ndarray] = []
        self.snapshots_A: List[np.ndarray] = []

        self.last_seen = np.zeros(s.population, dtype=np.int64)
        self.pending_tx: List[str] = []
        self.awaiting_reinstatement: Dict[int, str] = {}
        self._reset_epoch()

    # setup

    def _allocate(self):
        s, rng = self.scenario, self.rng["ydr"]
        for i, address in enumerate(self.slots):
            if s.ydr.distribution == "lognormal":
                mu = math.log(s.ydr.mean) - s.ydr.sigma ** 2 / 2
                amount = int(round(rng.lognormal(mu, s.ydr.sigma)))
            elif s.ydr.distribution == "uniform":
                amount = int(rng.integers(1, int(2 * s.ydr.mean) + 1))
            else:
                amount = int(s.ydr.mean)
            if amount > 0:
                self.ledger.earn(address, amount, "genesis-allocation", 0)
            if i < s.validator_count:
                self.ledger.earn(address, s.validators.allocation, "validator-bootstrap", 0)

    def _reset_epoch(self):
        n = self.scenario.population
        self.fees = np.zeros(n)
        self.frequency = np.zeros((n, n))
        self.payoffs: List[float] = []
        self.formed: List[SpeciesTerm] = []
        self.dissolved = []
        self.tx_count = self.rejected = self.satisfied = 0
        self.burned = self.reinstated = 0
        self.outcomes = np.zeros(self.scenario.communities)
        self.outcome_counts = np.zeros(self.scenario.communities)
        self._rounds_at_start = self.engine.trace.rounds
        self._finalized_at_start = len(self.engine.trace.finalized)

    def _active(self, slot: int) -> bool:
        return slot not in self.awaiting_reinstatement

    # tick phases

    def _interact(self, t: int):
        s, rng = self.scenario, self.rng["interaction"]
        it = s.interaction
        n_tx = int(rng.poisson(it.transaction_rate))
        if n_tx == 0:
            return
        active = [i for i in range(s.population) if self._active(i)]
        if not active:
            return
        for k in range(n_tx):
            i = active[int(rng.integers(len(active)))]
            community = self.community_of[i]
            members = [j for j in self.communities[community] if j != i and self._active(j)]
            if not members:
                continue
            a = self.slots[i]
            weights = np.array([1.0 + it.bond_bias * self.registry.bond_energy(a, self.slots[j]) for j in members])
            j = members[int(rng.choice(len(members), p=weights / weights.sum()))]
            b = self.slots[j]

            score = self.registry.token_of(b).profile.mean_score()
            signal = GateSignal(score, float(max(1, t - self.last_seen[j])))
            decision = None
            if s.gating.enabled:
                decision = self.gates[community].decide(signal)
                if not decision.accepted:
                    self.rejected += 1
                    continue

            p_sat = min(1.0, max(0.0, it.satisfaction_probability + it.score_weight * (score - 0.5)))
            satisfied = bool(rng.random() < p_sat)
            outcome = 1.0 if satisfied else -1.0
            if decision is not None:
                self.gates[community].short_loop_update(signal, decision, outcome)
            self.outcomes[community] += outcome
            self.outcome_counts[community] += 1

            self.tx_count += 1
            self.satisfied += int(satisfied)
            self.pending_tx.append(f"tx-{t}-{k}")
            self.last_seen[i] = self.last_seen[j] = t
            value = self._settle(a, b, satisfied, t)
            self.frequency[i, j] += 1.0
            self.fees[i] += value
            self.fees[j] += value

    def _settle(self, a: str, b: str, satisfied: bool, t: int) -> float:
        """Apply the ledger effects of one transaction; returns its fee value"""
        it = self.scenario.interaction
        if it.mode == "transfer":
            if not satisfied or self.ledger.balance(a) < it.transfer_amount:
                return 0.0
            self.ledger.spend(a, it.transfer_amount, "transfer", t)
            self.ledger.earn(b, it.transfer_amount, "transfer", t)
            self.payoffs.extend([-it.transfer_amount, it.transfer_amount])
            return float(it.transfer_amount)

        if satisfied:
            if it.reward <= 0:
                return 0.0
            self.ledger.earn(a, it.reward, "enthalpy", t)
            self.ledger.earn(b, it.reward, "enthalpy", t)
            self.registry.add_bond_energy(a, b, 2.0 * it.reward)
            self.formed.append(SpeciesTerm(1.0, 2.0 * it.reward))
            self.payoffs.extend([it.reward, it.reward])
            return float(it.reward)

        bond = self.registry.dissolve_bond(a, b)
        if bond is not None:
            self.dissolved.append(bond)
        if it.dissolution_penalty <= 0:
            return 0.0
        lost = 0
        for address in (a, b):
            before = self.ledger.balance(address)
            lost_here = before - self.ledger.slash(address, it.dissolution_penalty, "dissolution", t)
            self.payoffs.append(-lost_here)
            lost += lost_here
        return lost / 2.0

    def _seal(self, t: int):
        if t % self.scenario.block_interval:
            return
        block = self.engine.produce_block(t, self.pending_tx)
        self.pending_tx = []
        log.debug(f"block {block.height} sealed by {block.sealer} at tick {t}")

    # epoch phases

    def _governance(self, t: int):
        s, rng = self.scenario, self.rng["governance"]
        g = s.governance
        active = self.registry.active_addresses()
        active_set = set(active)

        for slot, token_id in sorted(self.awaiting_reinstatement.items()):
            voters = [a for a in active if self.ledger.balance(a) > 0]
            if not voters:
                continue
            ballots = [(a, 1.0 if rng.random() < g.approval_probability else 0.0) for a in voters]
            votes = votes_from_ledger(ballots, self.ledger)
            total = float(sum(self.ledger.balance(a) for a in active))
            proposal = Proposal(f"reinstate-{token_id}-{t}", "reinstatement", token_id, t)
            decision = tally(proposal, votes, total, is_eligible=active_set.__contains__,
                             quorum=g.quorum, pass_threshold=g.pass_threshold)
            fields = decision.to_dict()
            self.events.record("proposal", fields.pop("tick"), **fields, subject=token_id)
            if not decision.passed:
                continue
            token = self.registry.reinstate(token_id, random_profile(self.rng["identity"]),
                                            random_face(self.rng["identity"]), decision, t)
            del self.awaiting_reinstatement[slot]
            self.slots[slot] = token.owner_address
            self.reinstated += 1
            self.events.record("reinstate", t, slot=slot, old_token_id=token_id,
                               token_id=token.token_id, address=token.owner_address)

        if g.burn_probability <= 0:
            return
        for slot, address in enumerate(self.slots):
            if slot in self.awaiting_reinstatement or self.ledger.is_validator_eligible(address):
                continue
            if rng.random() >= g.burn_probability:
                continue
            token = self.registry.token_of(address)
            receipt = self.registry.burn_identity(token.token_id, t)
            self.dissolved.extend(receipt.dissolved_bonds)
            self.awaiting_reinstatement[slot] = token.token_id
            self.burned += 1
            self.events.record("burn", t, slot=slot, token_id=token.token_id, forfeited=receipt.forfeited,
                               dissolved_bonds=len(receipt.dissolved_bonds))

    def _gate_telemetry(self) -> dict:
        rows = []
        for k, gate in enumerate(self.gates):
            retro = self.outcomes[k] / self.outcome_counts[k] if self.outcome_counts[k] else 0.0
            gate.long_loop_update(float(retro))
            rows.append(gate.telemetry(reset=True))
        decisions = sum(r["decisions"] for r in rows)
        accepts = sum(r["accept_rate"] * r["decisions"] for r in rows)
        outcomes = float(self.outcome_counts.sum())
        return {
            "gate_accept_rate": accepts / decisions if decisions else 0.0,
            "gate_mean_outcome": float(self.outcomes.sum() / outcomes) if outcomes else 0.0,
            "gate_theta0": float(np.mean([r["theta0"] for r in rows])),
            "gate_theta1": float(np.mean([r["theta1"] for r in rows])),
            "gate_theta2": float(np.mean([r["theta2"] for r in rows])),
        }

    def _forecast(self, epoch: int) -> dict:
        row = {"forecast_trained": 0, "forecaster_mse": 0.0, "baseline_mse": 0.0}
        out_freq = self.frequency.sum(axis=1)
        top = out_freq.max()
        self.snapshots_V.append(np.stack([self.fees, out_freq / top if top > 0 else out_freq], axis=-1))
        self.snapshots_A.append(self.frequency.copy())
        if not self.models:
            return row

        f = self.scenario.forecaster
        windows = len(self.snapshots_V) - f.history - f.horizon + 1
        if windows < 2:
            return row
        V, A = np.stack(self.snapshots_V), np.stack(self.snapshots_A)
        delta = self.scenario.epoch_length
        full = GraphSequence(V, A, delta, delta)
        model_mse, baseline_mse = [], []
        for k, model in self.models.items():
            seq = full.subgraph(self.communities[k])
            samples = [
                ForecastSample(seq.window(w, f.history), seq.density()[w + f.history:w + f.history + f.horizon])
                for w in range(windows)
            ]
            dataset = GraphDataset(samples, seq.N, f.history, f.horizon, delta)
            train_set, holdout = dataset.subset(range(windows - 1)), dataset.subset([windows - 1])
            result = train(model, train_set, TrainConfig(
                steps=f.steps, learning_rate=f.learning_rate, optimizer=f.optimizer, batch_size=None,
                seed=epoch, log_every=0,
            ))
            self.losses.extend({"community": k, "epoch": epoch, "step": i, "loss": loss}
                               for i, loss in enumerate(result.losses))
            scores = evaluate(model, holdout)
            model_mse.append(scores["model_mse"])
            baseline_mse.append(scores["baseline_mse"])
        return {"forecast_trained": 1, "forecaster_mse": float(np.mean(model_mse)),
                "baseline_mse": float(np.mean(baseline_mse))}

    def _end_epoch(self, t: int):
        epoch = t // self.scenario.epoch_length
        self._governance(t)

        trace = self.engine.trace
        rounds = trace.rounds - self._rounds_at_start
        finalized = len(trace.finalized) - self._finalized_at_start
        validators = list(self.engine.validators)
        seals = [trace.seal_counts.get(v, 0) for v in validators] or [0]

        active = self.registry.active_addresses()
        balances = [self.ledger.balance(a) for a in active]
        supply = self.ledger.total_supply()
        holdings = entropy(HoldingsDistribution.from_holdings(balances)) if sum(balances) > 0 else 0.0
        game = classify_game(self.payoffs)

        row = {
            "epoch": epoch,
            "tick": t,
            "chain_height": self.engine.chain.height,
            "blocks_finalized": finalized,
            "rounds": rounds,
            "finalization_rate": finalized / rounds if rounds else 0.0,
            "validators": len(validators),
            "seal_count_min": min(seals),
            "seal_count_max": max(seals),
            "violations": len(trace.violations),
            "ydr_total": supply,
            "conservation_ok": int(self.ledger.check_conservation()),
            "gini": gini(balances),
            "entropy": holdings,
            "histogram": ";".join(str(c) for c in wealth_histogram(balances)),
            "dh_formation": enthalpy_of_reaction(self.formed, []),
            "dh_atomization": enthalpy_of_atomization(self.registry.bonds()),
            "dh_dissolved": enthalpy_of_atomization(self.dissolved),
            "transactions": self.tx_count,
            "rejected": self.rejected,
            "satisfied": self.satisfied,
            "payoff_total": float(math.fsum(self.payoffs)),
            "game_class": game.value,
            "ponzi_suspect": int(game.ponzi_suspect),
            "active_identities": len(active),
            "burned": self.burned,
            "reinstated": self.reinstated,
        }
        row.update(self._gate_telemetry() if self.gates and self.scenario.gating.enabled else {
            "gate_accept_rate": 0.0, "gate_mean_outcome": 0.0,
            "gate_theta0": 0.0, "gate_theta1": 0.0, "gate_theta2": 0.0,
        })
        row.update(self._forecast(epoch))
        self.report.rows.append(row)
        self.events.record("epoch", t, epoch=epoch, game_class=game.value, ydr_total=supply,
                           blocks_finalized=finalized)
        log.info(
            f"epoch {epoch}: height {row['chain_height']}, {self.tx_count} tx, "
            f"{game.value}, YDR {supply}, gini {row['gini']:.4f}"
        )
        self._reset_epoch()

    def run(self) -> RunResult:
        s = self.scenario
        log.info(f"running scenario {s.name!r}: population {s.population}, {s.duration} ticks, seed {s.seed}")
        t = 0
        try:
            for t in range(1, s.duration + 1):
                self._interact(t)
                self._seal(t)
                if t % s.epoch_length == 0:
                    self._end_epoch(t)
        except DANError as e:
            raise e.with_context(tick=t)
        return RunResult(s, self.report, self.engine.trace, self.events, self.ledger, self.registry,
                         self.models, self.losses)


def run(scenario: Scenario, seed: Optional[int] = None) -> RunResult:
    return Simulation(scenario.with_seed(seed)).run()


def export(result: RunResult, out_dir) -> Dict[str, Path]:
    """Write every artifact under out_dir with stable filenames"""
    out = Path(out_dir)
    paths = {name: out / filename for name, filename in ARTIFACTS.items()}
    try:
        out.mkdir(parents=True, exist_ok=True)
        result.report.export_csv(paths["metrics"])
        result.trace.to_jsonl(paths["trace"])
        result.events.to_jsonl(paths["events"])
        pd.DataFrame(result.losses, columns=["community", "epoch", "step", "loss"]).to_csv(paths["loss"], index=False)
        save_tensors(paths["model"], {
            f"community{k}/{name}": p.data
            for k, model in sorted(result.models.items())
            for name, p in model.params.items()
        })
        result.ledger.export_csv(paths["ledger"])
        result.registry.dump(paths["registry"])
    except OSError as e:
        raise IoError(f"cannot export to {out}: {e}") from e
    log.info(f"exported {len(paths)} artifacts to {out}")
    return paths
