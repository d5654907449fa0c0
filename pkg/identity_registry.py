"""
Ydentity token registry.

Tokens are minted from a profile and a 128-dim face vector, searched by profile
predicates, burned, and reinstated under a fresh token id after a governance
decision. There is no operation that changes a token's owner.
"""

import hashlib
import json
import operator
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import networkx as nx
import numpy as np

from config import config
from econodynamics import CommunityBond
from errors import (
    AlreadyBurned,
    DuplicateFace,
    GovernanceRejected,
    InvalidProfile,
    InvalidQuery,
    NotBurned,
    UnknownToken,
    ZeroNormVector,
)
from logger import logger
from reputation_ledger import ReputationLedger

log = logger.child("identity")

FACE_DIM = int(config.get('identity.face_dim', 128))
DUPLICATE_THRESHOLD = float(config.get('identity.duplicate_threshold', 0.85))

SCORE_FIELDS = (
    "tolerance", "credibility", "maturity", "autonomy",
    "emotional_state", "worthiness", "w_range",
)
DEMOGRAPHIC_FIELDS = ("age", "gender", "ambition", "job_level", "education_level")

# closed demographic enumerations, fixed in config
DEMOGRAPHIC_CHOICES = {
    "gender": tuple(config.get('identity.genders')),
    "ambition": tuple(config.get('identity.ambitions')),
    "job_level": tuple(config.get('identity.job_levels')),
    "education_level": tuple(config.get('identity.education_levels')),
}


class TokenState(str, Enum):
    ACTIVE = "Active"
    BURNED = "Burned"


@dataclass(frozen=True)
class Profile:
    tolerance: float
    credibility: float
    maturity: float
    autonomy: float
    emotional_state: float
    worthiness: float
    w_range: float
    age: int
    gender: str
    ambition: str
    job_level: str
    education_level: str

    def __post_init__(self):
        for name in SCORE_FIELDS:
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not 0.0 <= value <= 1.0:
                raise InvalidProfile(f"{name}={value!r} is outside [0, 1]")
        try:
            whole = int(self.age) == self.age
        except (TypeError, ValueError, OverflowError):
            whole = False
        if not whole or self.age < 0:
            raise InvalidProfile(f"age={self.age!r} must be a nonnegative integer")
        for name, choices in DEMOGRAPHIC_CHOICES.items():
            if getattr(self, name) not in choices:
                raise InvalidProfile(f"{name}={getattr(self, name)!r} is not one of {choices}")

    def scores(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in SCORE_FIELDS}

    def mean_score(self) -> float:
        return sum(self.scores().values()) / len(SCORE_FIELDS)


@dataclass(frozen=True, eq=False)
class FaceVector:
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if values.size != FACE_DIM:
            raise InvalidProfile(f"face vector has {values.size} entries, expected {FACE_DIM}")
        if not np.all(np.isfinite(values)):
            raise InvalidProfile("face vector has non-finite entries")
        if np.linalg.norm(values) == 0:
            raise ZeroNormVector("face vector has zero norm")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def unit(self) -> np.ndarray:
        return self.values / np.linalg.norm(self.values)


@dataclass
class YdentityToken:
    token_id: str
    owner_address: str
    profile: Profile
    face: FaceVector
    state: TokenState = TokenState.ACTIVE
    minted_at: int = 0

    def to_record(self) -> Dict[str, Any]:
        return {
            "token_id": self.token_id,
            "owner_address": self.owner_address,
            "state": self.state.value,
            "minted_at": self.minted_at,
            "profile": asdict(self.profile),
            "face": [float(x) for x in self.face.values],
        }

    @classmethod
    def from_record(cls, record: Dict[str, Any]) -> "YdentityToken":
        return cls(
            token_id=record["token_id"],
            owner_address=record["owner_address"],
            profile=Profile(**record["profile"]),
            face=FaceVector(np.array(record["face"], dtype=np.float64)),
            state=TokenState(record["state"]),
            minted_at=int(record["minted_at"]),
        )


@dataclass(frozen=True)
class BurnReceipt:
    token_id: str
    owner_address: str
    tick: int
    forfeited: int
    dissolved_bonds: List[CommunityBond] = field(default_factory=list)


@dataclass(frozen=True)
class Predicate:
    """One search condition over a Profile field, e.g. Predicate('credibility', '>=', 0.9)"""

    field: str
    op: str
    value: Any


_OPS = {
    "==": operator.eq,
    "!=": operator.ne,
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "in": lambda a, b: a in b,
}
_PROFILE_FIELDS = {f.name for f in fields(Profile)}


def match_face(a: FaceVector, b: FaceVector) -> float:
    """Cosine similarity of two face vectors, in [-1, 1]"""
    na, nb = np.linalg.norm(a.values), np.linalg.norm(b.values)
    if na == 0 or nb == 0:
        raise ZeroNormVector("cannot match a zero-norm face vector")
    cos = float(np.dot(a.values, b.values) / (na * nb))
    return min(1.0, max(-1.0, cos))


def _owner_address(serial: int) -> str:
    return "0x" + hashlib.blake2b(f"ydentity-owner:{serial}".encode(), digest_size=20).hexdigest()


class IdentityRegistry:
    """Registry of Ydentity tokens plus the community bond graph between owners"""

    def __init__(self, ledger: Optional[ReputationLedger] = None, duplicate_threshold: float = DUPLICATE_THRESHOLD):
        self.ledger = ledger if ledger is not None else ReputationLedger()
        self.duplicate_threshold = duplicate_threshold
        self.tokens: Dict[str, YdentityToken] = {}
        self._by_owner: Dict[str, str] = {}
        self.graph = nx.Graph()
        self._serial = 0
        self.counters = {"mints": 0, "burns": 0, "reinstatements": 0}

    # queries

    def token(self, token_id: str) -> YdentityToken:
        try:
            return self.tokens[token_id]
        except KeyError:
            raise UnknownToken(f"unknown token {token_id}") from None

    def token_of(self, owner_address: str) -> YdentityToken:
        if owner_address not in self._by_owner:
            raise UnknownToken(f"no token is owned by {owner_address}")
        return self.token(self._by_owner[owner_address])

    def active_tokens(self) -> List[YdentityToken]:
        return [t for _, t in sorted(self.tokens.items()) if t.state is TokenState.ACTIVE]

    def active_addresses(self) -> List[str]:
        return [t.owner_address for t in self.active_tokens()]

    def __len__(self):
        return len(self.tokens)

    # minting

    def _check_duplicate(self, face: FaceVector, tick: int) -> None:
        active = self.active_tokens()
        if not active:
            return
        faces = np.stack([t.face.unit for t in active])
        sims = faces @ face.unit
        worst = int(np.argmax(sims))
        if sims[worst] >= self.duplicate_threshold:
            raise DuplicateFace(
                f"face matches {active[worst].token_id} with similarity {sims[worst]:.4f}", tick=tick
            )

    def _next_ids(self):
        self._serial += 1
        return f"YDT-{self._serial:08d}", _owner_address(self._serial)

    def _register(self, profile: Profile, face: FaceVector, tick: int, owner_address: Optional[str]) -> YdentityToken:
        if not isinstance(profile, Profile):
            raise InvalidProfile("profile must be a Profile")
        if not isinstance(face, FaceVector):
            face = FaceVector(face)
        self._check_duplicate(face, tick)
        token_id, generated = self._next_ids()
        owner_address = owner_address or generated
        if owner_address in self._by_owner:
            raise InvalidProfile(f"owner address {owner_address} already holds a token", tick=tick)
        token = YdentityToken(token_id, owner_address, profile, face, TokenState.ACTIVE, tick)
        self.tokens[token_id] = token
        self._by_owner[owner_address] = token_id
        self.ledger.open_account(owner_address)
        self.graph.add_node(owner_address)
        return token

    def mint_identity(self, profile: Profile, face: FaceVector, tick: int, owner_address: Optional[str] = None) -> YdentityToken:
        token = self._register(profile, face, tick, owner_address)
        self.counters["mints"] += 1
        log.info(f"minted {token.token_id} for {token.owner_address} at tick {tick}")
        return token

    # search

    def search(self, query: Iterable[Predicate] = ()) -> List[str]:
        predicates = list(query)
        for p in predicates:
            if p.field not in _PROFILE_FIELDS:
                raise InvalidQuery(f"{p.field!r} is not a profile field")
            if p.op not in _OPS:
                raise InvalidQuery(f"unsupported operator {p.op!r}")
        return [
            t.owner_address
            for t in self.active_tokens()
            if all(_OPS[p.op](getattr(t.profile, p.field), p.value) for p in predicates)
        ]

    # community bonds

    def add_bond_energy(self, a: str, b: str, energy: float) -> None:
        """Accumulate YDR minted across the a-b edge"""
        if a == b or energy < 0:
            raise ValueError("bond needs distinct endpoints and nonnegative energy")
        for address in (a, b):
            if self.token_of(address).state is not TokenState.ACTIVE:
                raise AlreadyBurned(f"{address} no longer belongs to the community")
        if self.graph.has_edge(a, b):
            self.graph[a][b]["bond_energy"] += energy
        else:
            self.graph.add_edge(a, b, bond_energy=energy)

    def dissolve_bond(self, a: str, b: str) -> Optional[CommunityBond]:
        if not self.graph.has_edge(a, b):
            return None
        energy = self.graph[a][b]["bond_energy"]
        self.graph.remove_edge(a, b)
        return CommunityBond(tuple(sorted((a, b))), energy)

    def bond_energy(self, a: str, b: str) -> float:
        data = self.graph.get_edge_data(a, b)
        return data["bond_energy"] if data else 0.0

    def bonds(self) -> List[CommunityBond]:
        return [
            CommunityBond(tuple(sorted((a, b))), data["bond_energy"])
            for a, b, data in sorted(self.graph.edges(data=True), key=lambda e: tuple(sorted(e[:2])))
        ]

    # burn / reinstate

    def burn_identity(self, token_id: str, tick: int = 0) -> BurnReceipt:
        token = self.token(token_id)
        if token.state is TokenState.BURNED:
            raise AlreadyBurned(f"{token_id} is already burned", tick=tick)
        owner = token.owner_address
        dissolved = [
            CommunityBond(tuple(sorted((owner, other))), data["bond_energy"])
            for other, data in sorted(self.graph[owner].items())
        ] if owner in self.graph else []
        if owner in self.graph:
            self.graph.remove_node(owner)
        token.state = TokenState.BURNED
        forfeited = self.ledger.forfeit(owner, tick)
        self.counters["burns"] += 1
        log.info(f"burned {token_id} ({owner}) at tick {tick}, forfeited {forfeited} YDR")
        return BurnReceipt(token_id, owner, tick, forfeited, dissolved)

    def reinstate(self, old_token_id: str, new_profile: Profile, new_face: FaceVector, approval, tick: int) -> YdentityToken:
        old = self.token(old_token_id)
        if old.state is not TokenState.BURNED:
            raise NotBurned(f"{old_token_id} is still active", tick=tick)
        if not approval.passed:
            raise GovernanceRejected(f"reinstatement of {old_token_id} was not approved", tick=tick)
        token = self._register(new_profile, new_face, tick, None)
        self.counters["reinstatements"] += 1
        log.info(f"reinstated {old_token_id} as {token.token_id} at tick {tick}")
        return token

    # persistence

    def dump(self, path) -> Path:
        path = Path(path)
        records = [t.to_record() for _, t in sorted(self.tokens.items())]
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(records, f, indent=2)
        return path

    @classmethod
    def load(cls, path, ledger: Optional[ReputationLedger] = None) -> "IdentityRegistry":
        with open(path, 'r', encoding='utf-8') as f:
            records = json.load(f)
        registry = cls(ledger)
        for record in records:
            token = YdentityToken.from_record(record)
            registry.tokens[token.token_id] = token
            registry._by_owner[token.owner_address] = token.token_id
            registry.ledger.open_account(token.owner_address)
            if token.state is TokenState.ACTIVE:
                registry.graph.add_node(token.owner_address)
            serial = int(token.token_id.split("-")[-1])
            registry._serial = max(registry._serial, serial)
        return registry


def random_profile(rng: np.random.Generator) -> Profile:
    scores = {name: float(rng.uniform(0.0, 1.0)) for name in SCORE_FIELDS}
    demographics = {name: str(choices[int(rng.integers(len(choices)))]) for name, choices in DEMOGRAPHIC_CHOICES.items()}
    return Profile(age=int(rng.integers(18, 90)), **scores, **demographics)


def random_face(rng: np.random.Generator) -> FaceVector:
    return FaceVector(rng.standard_normal(FACE_DIM))

