import math

import numpy as np
import pytest

from conftest import basis_face, make_profile
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
from governance import GovernanceDecision
from identity_registry import (
    FACE_DIM,
    FaceVector,
    IdentityRegistry,
    Predicate,
    TokenState,
    match_face,
    random_face,
    random_profile,
)


def decision(passed: bool) -> GovernanceDecision:
    return GovernanceDecision("reinstate", 1.0 if passed else 0.0, passed, True, 0)


def test_first_mint(registry):
    token = registry.mint_identity(make_profile(), basis_face(0), 0)
    assert len(registry) == 1
    assert token.state is TokenState.ACTIVE
    assert registry.ledger.balance(token.owner_address) == 0


def test_duplicate_face_rejected(registry):
    registry.mint_identity(make_profile(), basis_face(0), 0)
    with pytest.raises(DuplicateFace):
        registry.mint_identity(make_profile(), basis_face(0), 1)


def test_orthogonal_faces_both_mint(registry):
    assert match_face(basis_face(0), basis_face(1)) == 0.0
    registry.mint_identity(make_profile(), basis_face(0), 0)
    registry.mint_identity(make_profile(), basis_face(1), 0)
    assert len(registry.active_tokens()) == 2


def test_token_ids_and_addresses_unique(registry, rng):
    tokens = [registry.mint_identity(random_profile(rng), random_face(rng), 0) for _ in range(25)]
    assert len({t.token_id for t in tokens}) == 25
    assert len({t.owner_address for t in tokens}) == 25


@pytest.mark.parametrize("field", ["credibility", "w_range"])
@pytest.mark.parametrize("value", [-0.01, 1.01])
def test_score_outside_unit_interval(field, value):
    with pytest.raises(InvalidProfile):
        make_profile(**{field: value})


@pytest.mark.parametrize("age", ["old", None, float("nan"), float("inf"), "30", 30.5, -1])
def test_malformed_age_is_invalid_profile(age):
    with pytest.raises(InvalidProfile):
        make_profile(age=age)


def test_unknown_demographic_value():
    with pytest.raises(InvalidProfile):
        make_profile(education_level="doctorate")


def test_face_vector_shape_and_norm():
    with pytest.raises(InvalidProfile):
        FaceVector(np.ones(FACE_DIM - 1))
    with pytest.raises(ZeroNormVector):
        FaceVector(np.zeros(FACE_DIM))


def test_match_face_examples(rng):
    v = FaceVector(rng.standard_normal(FACE_DIM))
    assert match_face(v, v) == pytest.approx(1.0, abs=1e-12)
    assert match_face(v, FaceVector(-v.values)) == pytest.approx(-1.0, abs=1e-12)

    w = np.zeros(FACE_DIM)
    w[:2] = 1.0 / math.sqrt(2.0)
    assert match_face(basis_face(0), FaceVector(w)) == pytest.approx(1.0 / math.sqrt(2.0), abs=1e-12)


def test_match_face_symmetric(rng):
    a, b = random_face(rng), random_face(rng)
    assert match_face(a, b) == match_face(b, a)


def test_search(registry):
    low = registry.mint_identity(make_profile(credibility=0.5), basis_face(0), 0)
    high = registry.mint_identity(make_profile(credibility=0.95), basis_face(1), 0)
    third = registry.mint_identity(make_profile(), basis_face(2), 0)
    assert registry.search() == [low.owner_address, high.owner_address, third.owner_address]
    assert registry.search([Predicate("credibility", ">=", 0.9)]) == [high.owner_address]


def test_search_empty_registry(registry):
    assert registry.search([Predicate("age", ">", 0)]) == []


def test_search_excludes_burned(registry):
    a = registry.mint_identity(make_profile(), basis_face(0), 0)
    b = registry.mint_identity(make_profile(), basis_face(1), 0)
    registry.burn_identity(a.token_id, 1)
    assert registry.search() == [b.owner_address]


def test_search_rejects_unknown_field(registry):
    with pytest.raises(InvalidQuery):
        registry.search([Predicate("salary", ">", 1)])


def test_burn_forfeits_balance_and_freezes(registry):
    token = registry.mint_identity(make_profile(), basis_face(0), 0)
    registry.ledger.earn(token.owner_address, 500, "seed", 0)
    receipt = registry.burn_identity(token.token_id, 4)
    assert receipt.forfeited == 500
    assert receipt.tick == 4
    assert registry.token(token.token_id).state is TokenState.BURNED
    assert registry.ledger.account(token.owner_address).frozen
    assert registry.ledger.check_conservation()


def test_burn_twice_and_unknown(registry):
    token = registry.mint_identity(make_profile(), basis_face(0), 0)
    registry.burn_identity(token.token_id, 1)
    with pytest.raises(AlreadyBurned):
        registry.burn_identity(token.token_id, 2)
    with pytest.raises(UnknownToken):
        registry.burn_identity("YDT-99999999", 2)


def test_burn_removes_owner_from_bond_graph(registry):
    a = registry.mint_identity(make_profile(), basis_face(0), 0)
    b = registry.mint_identity(make_profile(), basis_face(1), 0)
    registry.add_bond_energy(a.owner_address, b.owner_address, 10.0)
    receipt = registry.burn_identity(a.token_id, 1)
    assert [bond.bond_energy for bond in receipt.dissolved_bonds] == [10.0]
    assert a.owner_address not in registry.graph
    assert registry.bonds() == []


def test_burned_face_can_be_registered_again(registry):
    a = registry.mint_identity(make_profile(), basis_face(0), 0)
    registry.burn_identity(a.token_id, 1)
    registry.mint_identity(make_profile(), basis_face(0), 2)


def test_reinstate_mints_fresh_token(registry):
    old = registry.mint_identity(make_profile(), basis_face(0), 0)
    registry.ledger.earn(old.owner_address, 75, "seed", 0)
    registry.burn_identity(old.token_id, 1)
    new = registry.reinstate(old.token_id, make_profile(), basis_face(1), decision(True), 2)
    assert new.token_id != old.token_id
    assert new.owner_address != old.owner_address
    assert registry.ledger.balance(new.owner_address) == 0
    assert registry.token(old.token_id).state is TokenState.BURNED


def test_reinstate_requires_passing_decision(registry):
    old = registry.mint_identity(make_profile(), basis_face(0), 0)
    registry.burn_identity(old.token_id, 1)
    with pytest.raises(GovernanceRejected):
        registry.reinstate(old.token_id, make_profile(), basis_face(1), decision(False), 2)


def test_reinstate_active_token(registry):
    token = registry.mint_identity(make_profile(), basis_face(0), 0)
    with pytest.raises(NotBurned):
        registry.reinstate(token.token_id, make_profile(), basis_face(1), decision(True), 2)


def test_active_count_tracks_lifecycle(registry, rng):
    tokens = [registry.mint_identity(random_profile(rng), random_face(rng), 0) for _ in range(10)]
    for t in tokens[:4]:
        registry.burn_identity(t.token_id, 1)
    registry.reinstate(tokens[0].token_id, random_profile(rng), random_face(rng), decision(True), 2)
    c = registry.counters
    assert len(registry.active_tokens()) == c["mints"] - c["burns"] + c["reinstatements"] == 7


def test_no_owner_changing_operation():
    public = {name for name in dir(IdentityRegistry) if not name.startswith("_")}
    assert not any("transfer" in name for name in public)


def test_dump_and_load(tmp_path, registry, rng):
    tokens = [registry.mint_identity(random_profile(rng), random_face(rng), t) for t in range(3)]
    registry.burn_identity(tokens[1].token_id, 5)
    path = registry.dump(tmp_path / "registry.json")

    loaded = IdentityRegistry.load(path)
    assert loaded.active_addresses() == registry.active_addresses()
    assert loaded.token(tokens[1].token_id).state is TokenState.BURNED
    np.testing.assert_array_equal(loaded.token(tokens[0].token_id).face.values, tokens[0].face.values)
    fresh = loaded.mint_identity(random_profile(rng), random_face(rng), 6)
    assert fresh.token_id not in {t.token_id for t in tokens}
