import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from envkit.errors import ValidationError
from envkit.hilbert import BipartiteState, basis_vector, haar_unitary, partial_scalar_product, reduced_density
from envkit.schmidt import (
    CorrelationOperator,
    canonical_schmidt,
    correlation_operator,
    expand_in_basis,
    strong_schmidt_reconstruct,
    subsystem_picture,
    uniqueness_certificate,
)

from conftest import SQ2, bell, degenerate_spectrum, random_state, state_with_spectrum, two_thirds

seeds = st.integers(0, 2**32 - 1)
dims = st.integers(1, 5)


def test_expand_bell_computational_and_hadamard():
    coeffs = expand_in_basis(bell(), np.eye(2))
    assert np.allclose(coeffs, [[SQ2, 0], [0, SQ2]])
    had = np.array([[1, 1], [1, -1]]) * SQ2
    coeffs = expand_in_basis(bell(), had)
    assert np.allclose(coeffs[0], had[:, 0] * SQ2)
    assert np.allclose(coeffs[1], had[:, 1] * SQ2)


def test_expand_product_in_adapted_basis():
    rng = np.random.default_rng(2)
    basis = haar_unitary(3, rng)
    b = np.array([0.6, 0, 0.8j])
    psi = BipartiteState.product(basis[:, 1], b)
    coeffs = expand_in_basis(psi, basis)
    assert np.allclose(coeffs[1], b)
    assert np.allclose(coeffs[[0, 2]], 0, atol=1e-15)


def test_expand_rejects_non_orthonormal():
    with pytest.raises(ValidationError):
        expand_in_basis(bell(), np.array([[1, 1], [0, 1]]))


@given(seeds, dims, dims)
@settings(max_examples=40)
def test_expansion_reconstructs_and_matches_partial_product(seed, d1, d2):
    rng = np.random.default_rng(seed)
    psi = random_state(d1, d2, rng)
    basis = haar_unitary(d1, rng)
    coeffs = expand_in_basis(psi, basis)
    rebuilt = sum(np.kron(basis[:, m], coeffs[m]) for m in range(d1))
    assert np.linalg.norm(rebuilt - psi.amplitudes) < 1e-9
    for m in range(d1):
        assert np.max(np.abs(coeffs[m] - partial_scalar_product(basis[:, m], psi))) < 1e-12


@given(seeds, st.integers(2, 4), st.integers(2, 5))
@settings(max_examples=30)
def test_biorthogonality_iff_eigenbasis(seed, d1, d2):
    rng = np.random.default_rng(seed)
    psi = random_state(d1, d2, rng)
    sd = canonical_schmidt(psi)
    # Complete the Schmidt basis of H1; this is an eigenbasis of rho1.
    eig = np.linalg.eigh(reduced_density(psi, 1).matrix)[1]
    coeffs = expand_in_basis(psi, eig)
    gram = coeffs.conj() @ coeffs.T
    assert np.linalg.norm(gram - np.diag(np.diag(gram))) < 1e-10
    # A generic basis is not an eigenbasis, and the coefficients are not orthogonal.
    coeffs = expand_in_basis(psi, haar_unitary(d1, rng))
    gram = coeffs.conj() @ coeffs.T
    assert np.linalg.norm(gram - np.diag(np.diag(gram))) > 1e-6
    assert sd.rank <= min(d1, d2)


def test_canonical_examples():
    sd = canonical_schmidt(bell())
    assert np.allclose(sd.coefficients, [SQ2, SQ2])
    sd = canonical_schmidt(two_thirds())
    assert np.allclose(sd.coefficients, [np.sqrt(2 / 3), np.sqrt(1 / 3)])
    assert np.allclose(sd.basis1, np.eye(2)) and np.allclose(sd.basis2, np.eye(2))


def test_canonical_global_phase():
    rng = np.random.default_rng(8)
    psi = random_state(3, 4, rng)
    phased = BipartiteState(np.exp(0.7j) * psi.amplitudes, 3, 4)
    a, b = canonical_schmidt(psi), canonical_schmidt(phased)
    assert np.allclose(a.coefficients, b.coefficients)
    assert np.allclose(a.basis1, b.basis1, atol=1e-12)
    assert np.allclose(b.basis2, np.exp(0.7j) * a.basis2, atol=1e-12)


@given(seeds, dims, dims)
@settings(max_examples=40)
def test_canonical_invariants(seed, d1, d2):
    rng = np.random.default_rng(seed)
    psi = random_state(d1, d2, rng)
    sd = canonical_schmidt(psi)
    assert np.all(sd.coefficients > 0) and np.all(np.diff(sd.coefficients) <= 1e-15)
    assert abs(np.sum(sd.coefficients**2) - 1) < 1e-10
    r = sd.rank
    assert np.linalg.norm(sd.basis1.conj().T @ sd.basis1 - np.eye(r)) < 1e-10
    assert np.linalg.norm(sd.basis2.conj().T @ sd.basis2 - np.eye(r)) < 1e-10
    assert np.linalg.norm(sd.reconstruct().amplitudes - psi.amplitudes) < 1e-9
    eig = np.sort(np.linalg.eigvalsh(reduced_density(psi, 1).matrix))[::-1][:r]
    assert np.allclose(sd.eigenvalues, eig, atol=1e-12)
    # Phase convention: first largest-modulus entry of each basis1 column is real positive.
    for i in range(r):
        col = sd.basis1[:, i]
        k = int(np.argmax(np.abs(col) >= np.abs(col).max() - 1e-12))
        assert abs(col[k].imag) < 1e-14 and col[k].real > 0


def test_degenerate_ordering_is_reproducible():
    rng = np.random.default_rng(4)
    psi = state_with_spectrum([0.25] * 4, 4, 4, rng)
    a, b = canonical_schmidt(psi), canonical_schmidt(BipartiteState(psi.amplitudes.copy(), 4, 4))
    assert np.array_equal(a.basis1, b.basis1)


def test_correlation_operator_examples():
    ua = correlation_operator(bell())
    assert np.allclose(ua.V, np.eye(2))
    swap = BipartiteState(np.array([0, SQ2, SQ2, 0]), 2, 2)
    ua = correlation_operator(swap)
    assert np.allclose(ua.apply(basis_vector(2, 0)), basis_vector(2, 1))
    assert np.allclose(ua.V, [[0, 1], [1, 0]])


def test_correlation_operator_expansion_formula():
    rng = np.random.default_rng(13)
    psi = random_state(3, 4, rng)
    sd = canonical_schmidt(psi)
    ua = correlation_operator(psi)
    for i in range(sd.rank):
        assert np.allclose(ua.apply(sd.basis1[:, i]), sd.basis2[:, i], atol=1e-12)
    for _ in range(20):
        phi = rng.normal(size=3) + 1j * rng.normal(size=3)
        expected = sum(np.conj(np.vdot(sd.basis1[:, i], phi)) * sd.basis2[:, i] for i in range(sd.rank))
        assert np.allclose(ua.apply(phi), expected, atol=1e-12)


@given(seeds, st.integers(1, 5), st.integers(1, 6))
@settings(max_examples=40)
def test_antiunitarity(seed, d1, d2):
    rng = np.random.default_rng(seed)
    psi = random_state(d1, d2, rng)
    ua = correlation_operator(psi)
    assert ua.isometry_residual() < 1e-10
    x, y = (ua.Q1 @ (rng.normal(size=d1) + 1j * rng.normal(size=d1)) for _ in range(2))
    a, b = rng.normal(size=2) + 1j * rng.normal(size=2)
    lhs = ua.apply(a * x + b * y)
    rhs = np.conj(a) * ua.apply(x) + np.conj(b) * ua.apply(y)
    assert np.allclose(lhs, rhs, rtol=0, atol=1e-13)
    assert abs(np.vdot(ua.apply(x), ua.apply(y)) - np.conj(np.vdot(x, y))) < 1e-10
    assert np.allclose(ua.apply_inverse(ua.apply(x)), x, atol=1e-12)
    # Image of the support of rho1 is the support of rho2.
    pic = subsystem_picture(psi)
    assert np.linalg.norm(ua.Q1 - pic.support(1)) < 1e-10
    assert np.linalg.norm(ua.Q2 - pic.support(2)) < 1e-10


def test_uniqueness_examples(rng):
    psi = two_thirds()
    assert uniqueness_certificate(psi, 5, rng) < 1e-10
    assert uniqueness_certificate(bell(), 50, rng) < 1e-8
    with pytest.raises(ValueError):
        uniqueness_certificate(bell(), 0, rng)


def test_uniqueness_random_degenerate(rng):
    for _ in range(20):
        d1, d2 = int(rng.integers(2, 6)), int(rng.integers(2, 7))
        psi = state_with_spectrum(degenerate_spectrum(d1, d2, rng), d1, d2, rng)
        assert uniqueness_certificate(psi, 5, rng) < 1e-8


def test_strong_schmidt_examples():
    psi = strong_schmidt_reconstruct(np.eye(2) / 2, CorrelationOperator.conjugation(2))
    assert np.allclose(psi.amplitudes, bell().amplitudes)
    psi = strong_schmidt_reconstruct(np.diag([2 / 3, 1 / 3]), CorrelationOperator.conjugation(2))
    assert np.allclose(psi.amplitudes, two_thirds().amplitudes)


def test_strong_schmidt_support_mismatch():
    with pytest.raises(ValidationError):
        strong_schmidt_reconstruct(np.diag([1.0, 0.0]), CorrelationOperator.conjugation(2))


def test_strong_schmidt_round_trip(rng):
    for _ in range(30):
        d1, d2 = int(rng.integers(1, 6)), int(rng.integers(1, 7))
        psi = random_state(d1, d2, rng)
        ua = correlation_operator(psi)
        rho1 = reduced_density(psi, 1)
        back = strong_schmidt_reconstruct(rho1, ua)
        assert np.linalg.norm(correlation_operator(back).V - ua.V) < 1e-9
        assert np.linalg.norm(reduced_density(back, 1).matrix - rho1.matrix) < 1e-9
        assert np.linalg.norm(back.amplitudes - psi.amplitudes) < 1e-9


def test_subsystem_picture_examples():
    pic = subsystem_picture(bell())
    assert pic.multiplicities == (2,)
    assert np.allclose(pic.Q1[0], np.eye(2)) and np.allclose(pic.Q2[0], np.eye(2))
    pic = subsystem_picture(two_thirds())
    assert pic.multiplicities == (1, 1)
    rng = np.random.default_rng(21)
    pic = subsystem_picture(state_with_spectrum([0.5, 0.25, 0.25], 3, 5, rng))
    assert pic.multiplicities == (1, 2)
    assert np.isclose(np.trace(pic.Q2_null).real, 2)
    assert np.linalg.norm(pic.Q1_null) < 1e-10


@given(seeds, st.integers(1, 5), st.integers(1, 6))
@settings(max_examples=30)
def test_picture_projectors_are_images(seed, d1, d2):
    rng = np.random.default_rng(seed)
    psi = state_with_spectrum(degenerate_spectrum(d1, d2, rng), d1, d2, rng)
    pic = subsystem_picture(psi)
    rho2 = pic.ua.conjugate(pic.rho1)
    assert np.linalg.norm(rho2 - pic.rho2) < 1e-10
    for q1, q2, r in zip(pic.Q1, pic.Q2, pic.values):
        assert np.linalg.norm(q2 - pic.ua.conjugate(q1)) < 1e-10
        assert np.linalg.norm(pic.rho1 @ q1 - r * q1) < 1e-9
        assert np.linalg.norm(pic.rho2 @ q2 - r * q2) < 1e-9
    assert np.linalg.norm(sum(pic.Q1) + pic.Q1_null - np.eye(d1)) < 1e-10
    assert np.linalg.norm(sum(pic.Q2) + pic.Q2_null - np.eye(d2)) < 1e-10
