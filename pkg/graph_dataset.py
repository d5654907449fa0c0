"""
Graph sequences and forecasting datasets.

A GraphSequence holds T snapshots of node signals V (T, N, C) and directed
transaction-frequency adjacencies A (T, N, N). Channel 0 of V is always the
transaction density (fees) per profile. Datasets pair a T-snapshot history
with the next H densities and are stored as named binary tensors plus a JSON
sidecar.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from errors import NegativeEntry, ShapeMismatch
from logger import logger
from tensor_kernel import load_tensors, save_tensors

log = logger.child("dataset")


@dataclass
class GraphSequence:
    V: np.ndarray
    A: np.ndarray
    delta: int = 1
    t0: int = 0

    def __post_init__(self):
        self.V = np.asarray(self.V, dtype=np.float64)
        self.A = np.asarray(self.A, dtype=np.float64)
        if self.V.ndim != 3 or self.A.ndim != 3:
            raise ShapeMismatch(f"expected V (T, N, C) and A (T, N, N), got {self.V.shape} and {self.A.shape}")
        T, N, C = self.V.shape
        if self.A.shape != (T, N, N):
            raise ShapeMismatch(f"A has shape {self.A.shape}, V implies {(T, N, N)}")
        if C < 1:
            raise ShapeMismatch("V needs at least one channel")
        if np.any(self.A < 0):
            raise NegativeEntry("transaction frequencies must be nonnegative")
        if self.delta < 1:
            raise ValueError("delta must be at least 1")

    @property
    def T(self) -> int:
        return self.V.shape[0]

    @property
    def N(self) -> int:
        return self.V.shape[1]

    @property
    def C(self) -> int:
        return self.V.shape[2]

    def density(self) -> np.ndarray:
        """DensitySeries F, shape (T, N)"""
        return self.V[:, :, 0]

    def window(self, start: int, length: int) -> "GraphSequence":
        if start < 0 or start + length > self.T or length < 1:
            raise ShapeMismatch(f"window [{start}, {start + length}) outside a sequence of length {self.T}")
        return GraphSequence(self.V[start:start + length], self.A[start:start + length],
                             self.delta, self.t0 + start * self.delta)

    def subgraph(self, nodes: Sequence[int]) -> "GraphSequence":
        idx = np.asarray(nodes, dtype=np.intp)
        return GraphSequence(self.V[:, idx], self.A[:, idx][:, :, idx], self.delta, self.t0)


@dataclass
class ForecastSample:
    sequence: GraphSequence
    target: np.ndarray

    def __post_init__(self):
        self.target = np.asarray(self.target, dtype=np.float64)
        if self.target.ndim != 2 or self.target.shape[1] != self.sequence.N:
            raise ShapeMismatch(f"target shape {self.target.shape} does not match N={self.sequence.N}")
        if np.any(self.target < 0):
            raise NegativeEntry("densities must be nonnegative")


@dataclass
class GraphDataset:
    samples: List[ForecastSample]
    N: int
    T: int
    H: int
    delta: int = 1
    seed: Optional[int] = None
    metadata: Dict = field(default_factory=dict)

    def __len__(self):
        return len(self.samples)

    def __iter__(self) -> Iterator[ForecastSample]:
        return iter(self.samples)

    def __getitem__(self, i) -> ForecastSample:
        return self.samples[i]

    @property
    def C(self) -> int:
        return self.samples[0].sequence.C if self.samples else 0

    def subset(self, indices: Sequence[int]) -> "GraphDataset":
        return GraphDataset([self.samples[i] for i in indices], self.N, self.T, self.H,
                            self.delta, self.seed, dict(self.metadata))

    def split(self, train_fraction: float = 0.8) -> Tuple["GraphDataset", "GraphDataset"]:
        """Chronological split; the head trains, the tail tests"""
        cut = int(round(len(self) * train_fraction))
        return self.subset(range(cut)), self.subset(range(cut, len(self)))

    def batch(self, indices: Sequence[int]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stacked (V, A, target) arrays with a leading batch axis"""
        picked = [self.samples[i] for i in indices]
        return (np.stack([s.sequence.V for s in picked]),
                np.stack([s.sequence.A for s in picked]),
                np.stack([s.target for s in picked]))

    def save(self, path) -> Path:
        """Write <stem>.json (sidecar) and <stem>.tensors; returns the sidecar path"""
        sidecar = Path(path).with_suffix(".json")
        blob = sidecar.with_suffix(".tensors")
        tensors = {}
        for i, s in enumerate(self.samples):
            tensors[f"V/{i}"] = s.sequence.V
            tensors[f"A/{i}"] = s.sequence.A
            tensors[f"F/{i}"] = s.target
        save_tensors(blob, tensors)
        meta = {
            "N": self.N, "T": self.T, "H": self.H, "delta": self.delta, "seed": self.seed,
            "samples": len(self.samples),
            "t0": [s.sequence.t0 for s in self.samples],
            "tensors": blob.name,
            "metadata": self.metadata,
        }
        with open(sidecar, 'w', encoding='utf-8') as f:
            json.dump(meta, f, indent=2, sort_keys=True)
        log.info(f"saved {len(self.samples)} samples to {sidecar}")
        return sidecar

    @classmethod
    def load(cls, path) -> "GraphDataset":
        sidecar = Path(path).with_suffix(".json")
        with open(sidecar, 'r', encoding='utf-8') as f:
            meta = json.load(f)
        tensors = load_tensors(sidecar.parent / meta["tensors"])
        samples = []
        for i in range(meta["samples"]):
            seq = GraphSequence(tensors[f"V/{i}"].data, tensors[f"A/{i}"].data, meta["delta"], meta["t0"][i])
            samples.append(ForecastSample(seq, tensors[f"F/{i}"].data))
        return cls(samples, meta["N"], meta["T"], meta["H"], meta["delta"], meta["seed"], meta.get("metadata", {}))


def forward_transition(A: np.ndarray) -> np.ndarray:
    """P_f = D_out^{-1} A with zero rows left at zero"""
    out_degree = A.sum(axis=-1, keepdims=True)
    inv = np.divide(1.0, out_degree, out=np.zeros_like(out_degree), where=out_degree != 0)
    return inv * A


def community_graph(n_nodes: int, rng: np.random.Generator, radius: float = 0.35) -> nx.DiGraph:
    """Random geometric community graph, closed into a ring so every node transacts"""
    g = nx.random_geometric_graph(n_nodes, radius, seed=int(rng.integers(2**31)))
    g.add_edges_from((i, (i + 1) % n_nodes) for i in range(n_nodes) if n_nodes > 1)
    return g.to_directed()


def _base_frequencies(graph: nx.DiGraph, n_nodes: int, rng: np.random.Generator) -> np.ndarray:
    A = np.zeros((n_nodes, n_nodes))
    for i, j in sorted(graph.edges()):
        A[i, j] = rng.uniform(0.5, 1.5)
    return A


def generate_synthetic(
    N: int,
    T: int,
    H: int,
    n_sequences: int,
    seed: int,
    *,
    alpha: float = 0.5,
    noise: float = 0.01,
    drift: float = 0.05,
    injection: float = 0.0,
    period: int = 4,
    delta: int = 1,
    graph: Optional[nx.Graph] = None,
    initial: Optional[np.ndarray] = None,
) -> GraphDataset:
    """Planted diffusion dataset.

    Densities evolve as f_{t+1} = (1 - alpha) f_t + alpha P_f(A_t) f_t + noise,
    clipped at 0, plus an optional periodic injection at the highest-degree node.
    Transaction frequencies drift log-normally around a fixed base graph.
    Channels of V: density and normalized out-frequency.
    """
    if min(N, T, H, n_sequences) < 1:
        raise ValueError("sizes must be positive")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    if graph is None:
        graph = community_graph(N, rng)
    elif not graph.is_directed():
        graph = graph.to_directed()
    base = _base_frequencies(graph, N, rng)
    hub = max(range(N), key=lambda n: (graph.out_degree(n) if n in graph else 0, -n))

    steps = T + H
    samples = []
    for s in range(n_sequences):
        f = rng.uniform(0.0, 1.0, size=N) if initial is None else np.array(initial, dtype=np.float64)
        weights = base.copy()
        F = np.zeros((steps, N))
        A = np.zeros((steps, N, N))
        for t in range(steps):
            F[t] = f
            A[t] = weights
            P = forward_transition(weights)
            f = (1.0 - alpha) * f + alpha * (P @ f)
            if injection:
                f[hub] += injection * (1.0 + np.sin(2.0 * np.pi * (t + 1) / period))
            if noise:
                f = f + noise * rng.standard_normal(N)
            f = np.maximum(f, 0.0)
            if drift:
                weights = weights * np.exp(drift * rng.standard_normal((N, N)))
        out_freq = A.sum(axis=-1)
        scale = out_freq.max(axis=-1, keepdims=True)
        out_freq = np.divide(out_freq, scale, out=np.zeros_like(out_freq), where=scale != 0)
        V = np.stack([F, out_freq], axis=-1)
        seq = GraphSequence(V[:T], A[:T], delta, s * steps * delta)
        samples.append(ForecastSample(seq, F[T:]))

    log.debug(f"generated {n_sequences} synthetic sequences (N={N}, T={T}, H={H}, seed={seed})")
    return GraphDataset(samples, N, T, H, delta, seed, {
        "alpha": alpha, "noise": noise, "drift": drift, "injection": injection, "period": period,
        "hub": int(hub),
    })
