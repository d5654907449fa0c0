"""
Econodynamics: value accounting over the community.

Formation enthalpy prices the value created when bonds form, atomization
enthalpy the value needed to dissolve them, and the Shannon entropy of holdings
measures how spread out assets are. classify_game tells positive-sum
interaction apart from zero-sum redistribution.
"""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from config import config
from errors import InvalidDistribution, ValidationError

ZERO_SUM_EPSILON = float(config.get('econodynamics.zero_sum_epsilon', 1e-9))

# lower edges of the fixed wealth-histogram bins, in YDR; the last bin is open
HISTOGRAM_EDGES = (0, 1, 10, 100, 1_000, 10_000, 100_000, 1_000_000, 10_000_000)


class GameClass(str, Enum):
    NEGATIVE_SUM = "NegativeSum"
    ZERO_SUM = "ZeroSum"
    POSITIVE_SUM = "PositiveSum"

    @property
    def ponzi_suspect(self) -> bool:
        return self is GameClass.ZERO_SUM


@dataclass(frozen=True)
class SpeciesTerm:
    coefficient: float
    formation_enthalpy: float

    def __post_init__(self):
        if self.coefficient <= 0:
            raise ValidationError("species.coefficient", f"coefficient must be positive, got {self.coefficient}")


@dataclass(frozen=True)
class CommunityBond:
    endpoints: Tuple[str, str]
    bond_energy: float

    def __post_init__(self):
        if self.bond_energy < 0:
            raise ValidationError("bond.bond_energy", "bond energy must be nonnegative")
        if self.endpoints[0] == self.endpoints[1]:
            raise ValidationError("bond.endpoints", "bond endpoints must be distinct")


@dataclass(frozen=True)
class HoldingsDistribution:
    p: Tuple[float, ...]

    def __post_init__(self):
        p = np.asarray(self.p, dtype=np.float64)
        if p.size == 0 or not np.all(np.isfinite(p)) or np.any(p < 0):
            raise InvalidDistribution("shares must be finite and nonnegative")
        if abs(math.fsum(self.p) - 1.0) > 1e-12:
            raise InvalidDistribution(f"shares sum to {math.fsum(self.p)}, not 1")

    @classmethod
    def from_holdings(cls, holdings: Iterable[float]) -> "HoldingsDistribution":
        values = [float(h) for h in holdings]
        total = math.fsum(values)
        if total <= 0:
            raise InvalidDistribution("holdings sum to zero")
        shares = [v / total for v in values]
        # push the rounding residue into the largest share
        residue = 1.0 - math.fsum(shares)
        i = max(range(len(shares)), key=shares.__getitem__)
        shares[i] += residue
        return cls(tuple(shares))


def _side(terms: Iterable[SpeciesTerm]) -> float:
    return math.fsum(t.coefficient * t.formation_enthalpy for t in terms)


def enthalpy_of_reaction(products: Sequence[SpeciesTerm], reactants: Sequence[SpeciesTerm]) -> float:
    return _side(products) - _side(reactants)


def enthalpy_of_atomization(bonds: Iterable[CommunityBond]) -> float:
    return math.fsum(b.bond_energy for b in bonds)


def entropy(dist: HoldingsDistribution) -> float:
    """Shannon entropy in nats, with 0 ln 0 = 0"""
    p = np.asarray(dist.p, dtype=np.float64)
    nz = p[p > 0]
    return float(max(0.0, -math.fsum(nz * np.log(nz))))


def classify_game(payoffs: Sequence[float], epsilon: float = ZERO_SUM_EPSILON) -> GameClass:
    values = [float(x) for x in payoffs]
    if not all(math.isfinite(x) for x in values):
        raise ValueError("payoffs must be finite")
    total = math.fsum(values)
    scale = max(1.0, math.fsum(abs(x) for x in values))
    if abs(total) <= epsilon * scale:
        return GameClass.ZERO_SUM
    return GameClass.POSITIVE_SUM if total > 0 else GameClass.NEGATIVE_SUM


def gini(values: Sequence[float]) -> float:
    """Gini coefficient of a wealth vector; 0 for empty or all-zero wealth"""
    w = np.sort(np.asarray(values, dtype=np.float64))
    n = w.size
    total = w.sum()
    if n < 2 or total <= 0:
        return 0.0
    idx = np.arange(1, n + 1)
    return float((2.0 * np.sum(idx * w) - (n + 1) * total) / (n * total))


def wealth_histogram(values: Sequence[float]) -> List[int]:
    w = np.asarray(values, dtype=np.float64)
    bins = np.searchsorted(np.asarray(HISTOGRAM_EDGES, dtype=np.float64), w, side="right") - 1
    counts = np.bincount(bins[bins >= 0], minlength=len(HISTOGRAM_EDGES))
    return [int(c) for c in counts]
