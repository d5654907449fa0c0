"""
Shared fixtures for the DAN simulator tests
"""

import os
import tempfile

# config and logger are module-level singletons; point them at a scratch
# home before any test module imports them
os.environ.setdefault("DAN_HOME", tempfile.mkdtemp(prefix="dan-home-"))

import numpy as np
import pytest

from identity_registry import FACE_DIM, FaceVector, IdentityRegistry, Profile
from reputation_ledger import ReputationLedger


def make_profile(**overrides) -> Profile:
    values = dict(
        tolerance=0.5, credibility=0.5, maturity=0.5, autonomy=0.5,
        emotional_state=0.5, worthiness=0.5, w_range=0.5,
        age=30, gender="female", ambition="moderate", job_level="entry", education_level="tertiary",
    )
    values.update(overrides)
    return Profile(**values)


def basis_face(i: int) -> FaceVector:
    v = np.zeros(FACE_DIM)
    v[i] = 1.0
    return FaceVector(v)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def ledger():
    return ReputationLedger()


@pytest.fixture
def registry(ledger):
    return IdentityRegistry(ledger)
