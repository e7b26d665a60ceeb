import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from envkit.errors import CommutationError, DimensionError, NotCertifiableError
from envkit.hilbert import BipartiteState, basis_vector, commutator_norm, haar_unitary
from envkit.schmidt import canonical_schmidt, subsystem_picture
from envkit.twins import (
    compose,
    hermitian_to_unitary,
    identity_pair,
    inverse,
    is_mixed_twin,
    is_twin_pair,
    sample_twin,
    swap_twin,
    twin_hermitian_of,
    twin_of,
    twin_residual,
    unitary_to_hermitian,
)

from conftest import SQ2, bell, degenerate_spectrum, random_state, state_with_spectrum, two_thirds

seeds = st.integers(0, 2**32 - 1)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]])


def _degenerate_picture(rng, max1=5, max2=6):
    d1, d2 = int(rng.integers(1, max1 + 1)), int(rng.integers(1, max2 + 1))
    return subsystem_picture(state_with_spectrum(degenerate_spectrum(d1, d2, rng), d1, d2, rng))


def test_is_twin_pair_examples():
    assert is_twin_pair(SX, SX, bell()).residual < 1e-12
    assert is_twin_pair(SY, -SY, bell()).ok
    psi = two_thirds()
    rng = np.random.default_rng(0)
    for _ in range(20):
        assert not is_twin_pair(SX, haar_unitary(2, rng), psi).ok
    with pytest.raises(DimensionError):
        is_twin_pair(np.eye(3), np.eye(2), bell())


def test_twin_residual_oracle():
    rng = np.random.default_rng(1)
    psi = random_state(3, 4, rng)
    u1, u2 = haar_unitary(3, rng), haar_unitary(4, rng)
    direct = np.kron(u1, np.eye(4)) @ psi.amplitudes - np.kron(np.eye(3), u2) @ psi.amplitudes
    assert np.isclose(twin_residual(u1, u2, psi), np.linalg.norm(direct))


def test_phase_fit():
    pic = subsystem_picture(two_thirds())
    u1 = np.diag(np.exp(1j * np.array([0.3, -1.1])))
    u2 = twin_of(u1, pic)
    check = is_twin_pair(u1, np.exp(0.4j) * u2, pic.state, allow_phase=True)
    assert check.ok and np.isclose(check.phase, -0.4)
    assert not is_twin_pair(u1, np.exp(0.4j) * u2, pic.state).ok


def test_twin_of_examples():
    rng = np.random.default_rng(2)
    pic = subsystem_picture(bell())
    for _ in range(10):
        u1 = haar_unitary(2, rng)
        assert np.allclose(twin_of(u1, pic), u1.T, atol=1e-12)
    pic = subsystem_picture(two_thirds())
    u1 = np.diag(np.exp(1j * np.array([0.5, 2.0])))
    # Inversion and the antiunitary conjugation cancel: diagonal phases carry over unchanged.
    u2 = twin_of(u1, pic)
    assert np.allclose(u2, u1)
    c = two_thirds().matrix
    assert np.allclose(u1 @ c, c @ u2.T)
    assert not is_twin_pair(u1, u1.conj(), pic.state).ok
    assert np.allclose(twin_of(np.eye(2), pic), np.eye(2))


def test_twin_of_rejects_non_commuting():
    pic = subsystem_picture(two_thirds())
    with pytest.raises(CommutationError):
        twin_of(SX, pic)


def test_twin_of_null_space_completion():
    rng = np.random.default_rng(3)
    pic = subsystem_picture(state_with_spectrum([0.6, 0.4], 2, 4, rng))
    u2 = twin_of(np.eye(2), pic)
    assert np.linalg.norm(u2 - np.eye(4)) < 1e-12
    u1 = hermitian_to_unitary(pic.rho1 * 3.0, pic)
    u2 = twin_of(u1, pic)
    assert np.linalg.norm(pic.Q2_null @ u2 - pic.Q2_null) < 1e-12


def test_sample_examples():
    rng = np.random.default_rng(4)
    pic = subsystem_picture(bell())
    seen = np.array([sample_twin(pic, rng).U1 for _ in range(200)])
    # A single 2-dimensional block: the first unitaries spread over all of U(2).
    assert np.std(seen[:, 0, 1].real) > 0.2
    pic = subsystem_picture(state_with_spectrum([0.5, 0.3, 0.2], 3, 3, rng))
    sd = pic.schmidt
    for _ in range(20):
        pair = sample_twin(pic, rng)
        local = sd.basis1.conj().T @ pair.U1 @ sd.basis1
        assert np.linalg.norm(local - np.diag(np.diag(local))) < 1e-8


def test_sample_random_4x4(rng):
    for _ in range(50):
        pic = subsystem_picture(random_state(4, 4, rng))
        for _ in range(4):
            assert sample_twin(pic, rng).residual < 1e-9


@given(seeds)
@settings(max_examples=40, deadline=None)
def test_twins_commute_and_follow_formula(seed):
    rng = np.random.default_rng(seed)
    pic = _degenerate_picture(rng)
    pair = sample_twin(pic, rng)
    assert commutator_norm(pair.U1, pic.rho1) < 1e-8
    assert commutator_norm(pair.U2, pic.rho2) < 1e-8
    q2 = pic.support(2)
    expected = pic.ua.conjugate(pair.U1.conj().T)
    assert np.linalg.norm(pair.U2 @ q2 - expected) < 1e-8
    # U2^{-1} on the second factor undoes U1 on the first.
    moved = np.kron(pair.U1, np.eye(pic.state.d2)) @ pic.state.amplitudes
    back = np.kron(np.eye(pic.state.d1), pair.U2.conj().T) @ moved
    assert np.linalg.norm(back - pic.state.amplitudes) < 1e-9


@given(seeds)
@settings(max_examples=30, deadline=None)
def test_constructed_twin_certifies(seed):
    rng = np.random.default_rng(seed)
    pic = _degenerate_picture(rng)
    u1 = sample_twin(pic, rng).U1
    assert is_twin_pair(u1, twin_of(u1, pic), pic.state).ok


def test_nondegenerate_twins_are_diagonal(rng):
    for _ in range(10):
        pic = subsystem_picture(state_with_spectrum([0.4, 0.3, 0.2, 0.1], 4, 5, rng))
        b = pic.schmidt.basis1
        for _ in range(5):
            pair = sample_twin(pic, rng)
            local = b.conj().T @ pair.U1 @ b
            assert np.linalg.norm(local - np.diag(np.diag(local))) < 1e-8


def test_twin_rotated_schmidt_basis_is_valid(rng):
    # (U1 x U2^{-1}) psi = psi, so (U1 b1_i, U2^{-1} b2_i) is another Schmidt pair set.
    for _ in range(10):
        pic = _degenerate_picture(rng)
        pair = sample_twin(pic, rng)
        sd = pic.schmidt
        b1 = pair.U1 @ sd.basis1
        b2 = pair.U2.conj().T @ sd.basis2
        assert np.linalg.norm(b1.conj().T @ b1 - np.eye(sd.rank)) < 1e-10
        rebuilt = ((b1 * sd.coefficients) @ b2.T).reshape(-1)
        assert np.linalg.norm(rebuilt - pic.state.amplitudes) < 1e-9


def test_swap_examples():
    pic = subsystem_picture(bell())
    pair = swap_twin(basis_vector(2, 0), basis_vector(2, 1), pic)
    assert np.allclose(np.abs(pair.U1), np.abs(SX), atol=1e-12)
    assert np.allclose(pair.U1 @ basis_vector(2, 0), basis_vector(2, 1), atol=1e-12)
    pair = swap_twin(basis_vector(2, 0), basis_vector(2, 0), pic)
    assert np.allclose(pair.U1, np.eye(2))
    with pytest.raises(NotCertifiableError):
        swap_twin(basis_vector(2, 0), basis_vector(2, 1), subsystem_picture(two_thirds()))


def test_swap_random_block(rng):
    for _ in range(20):
        pic = subsystem_picture(state_with_spectrum([0.3, 0.3, 0.3, 0.1], 4, 4, rng))
        b = pic.blocks1[0]
        a = b @ (rng.normal(size=3) + 1j * rng.normal(size=3))
        c = b @ (rng.normal(size=3) + 1j * rng.normal(size=3))
        a, c = a / np.linalg.norm(a), c / np.linalg.norm(c)
        pair = swap_twin(a, c, pic)
        assert np.linalg.norm(pair.U1 @ a - c) < 1e-12
        assert pair.residual < 1e-9


def test_group_examples(rng):
    pic = subsystem_picture(state_with_spectrum([0.5, 0.25, 0.25], 3, 3, rng))
    psi = pic.state
    p, q = sample_twin(pic, rng), sample_twin(pic, rng)
    e = compose(p, inverse(p, psi), psi)
    assert np.linalg.norm(e.U1 - np.eye(3)) < 1e-9 and np.linalg.norm(e.U2 - np.eye(3)) < 1e-9
    e = compose(identity_pair(psi), q, psi)
    assert np.allclose(e.U1, q.U1) and np.allclose(e.U2, q.U2)
    for _ in range(20):
        p, q, r = (sample_twin(pic, rng) for _ in range(3))
        left = compose(compose(p, q, psi), r, psi)
        right = compose(p, compose(q, r, psi), psi)
        assert np.linalg.norm(left.U1 - right.U1) + np.linalg.norm(left.U2 - right.U2) < 1e-9


def test_group_side_two_order_matters(rng):
    pic = subsystem_picture(state_with_spectrum([0.4, 0.4, 0.2], 3, 3, rng))
    p, q = sample_twin(pic, rng), sample_twin(pic, rng)
    # The forward order on side 2 is not a twin pair unless the blocks commute.
    assert not is_twin_pair(p.U1 @ q.U1, p.U2 @ q.U2, pic.state).ok
    assert is_twin_pair(p.U1 @ q.U1, q.U2 @ p.U2, pic.state).ok


def test_hermitian_twin_examples():
    pic = subsystem_picture(bell())
    ht = twin_hermitian_of(pic.rho1, pic)
    assert np.allclose(ht.H2, pic.rho2)
    rng = np.random.default_rng(9)
    pic = subsystem_picture(state_with_spectrum([0.5, 0.25, 0.25], 3, 5, rng))
    ht = twin_hermitian_of(np.eye(3), pic)
    assert np.linalg.norm(ht.H2 - pic.support(2)) < 1e-10
    for q1, q2 in zip(pic.Q1, pic.Q2):
        assert np.linalg.norm(twin_hermitian_of(q1, pic).H2 - q2) < 1e-10
    with pytest.raises(CommutationError):
        twin_hermitian_of(np.diag([1.0, 0, 0]) + np.ones((3, 3)), pic)


def test_hermitian_twin_acts_equally(rng):
    for _ in range(20):
        pic = _degenerate_picture(rng)
        h1 = unitary_to_hermitian(sample_twin(pic, rng).U1, pic)
        ht = twin_hermitian_of(h1, pic)
        c = pic.state.matrix
        assert np.linalg.norm(ht.H1 @ c - c @ ht.H2.T) < 1e-9
        assert commutator_norm(ht.H2, pic.rho2) < 1e-9


def test_exponential_bridge_examples():
    pic = subsystem_picture(state_with_spectrum([0.5, 0.25, 0.25], 3, 3, np.random.default_rng(6)))
    assert np.allclose(hermitian_to_unitary(np.zeros((3, 3)), pic), np.eye(3))
    u = hermitian_to_unitary(np.pi * pic.Q1[1], pic)
    assert np.linalg.norm(u - (np.eye(3) - 2 * pic.Q1[1])) < 1e-12


def test_exponential_round_trip(rng):
    for _ in range(50):
        pic = _degenerate_picture(rng)
        u = sample_twin(pic, rng).U1
        h = unitary_to_hermitian(u, pic)
        eig = np.linalg.eigvalsh(h)
        assert eig.min() > -1e-12 and eig.max() < 2 * np.pi
        assert np.linalg.norm(hermitian_to_unitary(h, pic) - u) < 1e-9


def test_mixed_twin_examples(rng):
    pic = subsystem_picture(state_with_spectrum([0.5, 0.3, 0.2], 3, 3, rng))
    h1 = unitary_to_hermitian(sample_twin(pic, rng).U1, pic)
    ht = twin_hermitian_of(h1, pic)
    assert is_mixed_twin(ht.H1, ht.H2, pic.state.projector(), 3, 3).ok
    assert is_mixed_twin(np.eye(2), np.eye(3), np.eye(6) / 6, 2, 3).ok
    # Classically correlated mixture 1/2(|00><00| + |11><11|) with H1 = Z, H2 = X.
    rho = np.diag([0.5, 0, 0, 0.5]).astype(complex)
    z = np.diag([1.0, -1.0])
    check = is_mixed_twin(z, SX, rho, 2, 2)
    assert not check.ok and check.residual > 0.5
    assert is_mixed_twin(z, z, rho, 2, 2).ok
    with pytest.raises(DimensionError):
        is_mixed_twin(z, z, rho, 2, 3)


def test_identity_pair_matches_state():
    psi = BipartiteState.normalized(np.arange(6) + 1.0, 2, 3)
    e = identity_pair(psi)
    assert is_twin_pair(e.U1, e.U2, psi).residual == 0
    assert canonical_schmidt(psi).rank == 2
