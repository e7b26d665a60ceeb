"""Schmidt decompositions, the correlation operator and the subsystem picture.

The correlation operator is antiunitary. It is stored as a linear partial
isometry ``V`` composed with complex conjugation in the computational basis
of the first factor, ``U_a x = V @ conj(x)``. Antilinearity is then exact and
only unitarity is subject to rounding.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ValidationError
from .hilbert import (
    BipartiteState,
    DensityOperator,
    as_matrix,
    cluster_descending,
    haar_unitary,
    partial_scalar_product,
    reduced_density,
    spectral,
)
from .tolerances import Tolerances, resolve

__all__ = [
    "CorrelationOperator",
    "SchmidtDecomposition",
    "SubsystemPicture",
    "canonical_schmidt",
    "correlation_operator",
    "expand_in_basis",
    "strong_schmidt_reconstruct",
    "subsystem_picture",
    "uniqueness_certificate",
]

_PHASE_TIE = 1e-12
_SORT_DECIMALS = 10


@dataclass(frozen=True, eq=False)
class SchmidtDecomposition:
    """``psi = sum_i coefficients[i] * basis1[:, i] (x) basis2[:, i]``."""

    coefficients: np.ndarray
    basis1: np.ndarray
    basis2: np.ndarray

    @property
    def rank(self) -> int:
        return int(self.coefficients.size)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.coefficients**2

    @property
    def dims(self) -> tuple[int, int]:
        return self.basis1.shape[0], self.basis2.shape[0]

    def coefficient_matrix(self) -> np.ndarray:
        return (self.basis1 * self.coefficients) @ self.basis2.T

    def reconstruct(self) -> BipartiteState:
        d1, d2 = self.dims
        return BipartiteState(self.coefficient_matrix().reshape(-1), d1, d2)

    def clusters(self, tol: Tolerances | None = None) -> list[np.ndarray]:
        return cluster_descending(self.eigenvalues, resolve(tol).eps_cluster)


def expand_in_basis(psi: BipartiteState, basis1, tol: Tolerances | None = None) -> np.ndarray:
    """Generalized expansion coefficients of ``psi`` in a basis of ``H1``.

    Row ``m`` of the result is ``<m|_1 |psi>_12``, so that
    ``psi = sum_m basis1[:, m] (x) result[m]``.
    """
    tol = resolve(tol)
    b = as_matrix(basis1)
    if b.shape != (psi.d1, psi.d1):
        raise DimensionError(f"basis must be {psi.d1}x{psi.d1}, got {b.shape}")
    err = np.linalg.norm(b.conj().T @ b - np.eye(psi.d1))
    if err > tol.tol_op:
        raise ValidationError(f"basis is not orthonormal (residual {err:.3g})")
    return np.array([partial_scalar_product(b[:, m], psi) for m in range(psi.d1)])


def _fix_phase(col: np.ndarray) -> complex:
    mags = np.abs(col)
    idx = int(np.argmax(mags >= mags.max() - _PHASE_TIE))
    return col[idx] / mags[idx]


def _lex_key(col: np.ndarray):
    rounded = np.round(col, _SORT_DECIMALS) + 0.0
    return tuple(x for z in rounded for x in (z.real, z.imag))


def canonical_schmidt(psi: BipartiteState, tol: Tolerances | None = None) -> SchmidtDecomposition:
    """Canonical (positive-coefficient) Schmidt decomposition via a dense SVD.

    Phase convention: each first-factor vector has its first largest-modulus
    component real positive, the compensating phase goes to its partner.
    Inside a degenerate cluster the pairs are ordered by the first-factor
    vectors, lexicographically descending on ``(re, im)`` per entry.
    """
    tol = resolve(tol)
    u, s, vh = np.linalg.svd(psi.matrix)
    keep = int(np.sum(s**2 >= tol.eps_rank))
    coeffs = s[:keep]
    b1 = u[:, :keep].copy()
    b2 = vh[:keep, :].T.copy()
    for i in range(keep):
        ph = _fix_phase(b1[:, i])
        b1[:, i] /= ph
        b2[:, i] *= ph
    order = []
    for g in cluster_descending(coeffs**2, tol.eps_cluster):
        order.extend(sorted(g, key=lambda i: _lex_key(b1[:, i]), reverse=True))
    order = np.array(order, dtype=int)
    return SchmidtDecomposition(coeffs[order], b1[:, order], b2[:, order])


@dataclass(frozen=True, eq=False)
class CorrelationOperator:
    """Antiunitary map ``supp(rho1) -> supp(rho2)`` stored as ``V`` after conjugation."""

    V: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray

    @classmethod
    def from_isometry(cls, v) -> "CorrelationOperator":
        # Conjugation precedes V, so the domain is the conjugate of V's row space.
        v = as_matrix(v)
        return cls(v, v.T @ v.conj(), v @ v.conj().T)

    @classmethod
    def conjugation(cls, dim: int) -> "CorrelationOperator":
        """Plain complex conjugation on the whole space."""
        return cls.from_isometry(np.eye(dim, dtype=complex))

    @classmethod
    def from_bases(cls, basis1, basis2) -> "CorrelationOperator":
        return cls.from_isometry(as_matrix(basis2) @ as_matrix(basis1).T)

    @property
    def rank(self) -> int:
        return int(round(np.trace(self.Q1).real))

    def apply(self, x) -> np.ndarray:
        """``U_a x``; for a matrix argument, acts column by column."""
        return self.V @ np.conj(x)

    def apply_inverse(self, y) -> np.ndarray:
        return self.V.T @ np.conj(y)

    def conjugate(self, m) -> np.ndarray:
        """``U_a M U_a^{-1}`` restricted to the codomain support."""
        return self.V @ np.conj(m) @ self.V.conj().T

    def conjugate_inverse(self, m) -> np.ndarray:
        """``U_a^{-1} M U_a`` restricted to the domain support."""
        return self.V.T @ np.conj(m) @ self.V.conj()

    def isometry_residual(self) -> float:
        return float(np.linalg.norm(self.V.conj().T @ self.V - self.Q1.conj()))


def correlation_operator(psi: BipartiteState, tol: Tolerances | None = None,
                         schmidt: SchmidtDecomposition | None = None) -> CorrelationOperator:
    sd = canonical_schmidt(psi, tol) if schmidt is None else schmidt
    return CorrelationOperator.from_bases(sd.basis1, sd.basis2)


def uniqueness_certificate(psi: BipartiteState, trials: int, rng: np.random.Generator,
                           tol: Tolerances | None = None) -> float:
    """Largest change of ``U_a`` over random re-choices of the eigen-sub-basis.

    Each trial rotates every degenerate block of the first-factor Schmidt
    basis by an independent Haar unitary, recovers the partner vectors from
    ``psi`` by partial scalar products, and rebuilds the isometry.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    tol = resolve(tol)
    sd = canonical_schmidt(psi, tol)
    v_ref = CorrelationOperator.from_bases(sd.basis1, sd.basis2).V
    groups = sd.clusters(tol)
    worst = 0.0
    for _ in range(trials):
        rotated = sd.basis1.copy()
        for g in groups:
            rotated[:, g] = sd.basis1[:, g] @ haar_unitary(len(g), rng)
        partners = np.column_stack([
            partial_scalar_product(rotated[:, i], psi) / sd.coefficients[i]
            for i in range(sd.rank)
        ])
        v = CorrelationOperator.from_bases(rotated, partners).V
        worst = max(worst, float(np.linalg.norm(v - v_ref)))
    return worst


def strong_schmidt_reconstruct(rho1, ua: CorrelationOperator,
                               tol: Tolerances | None = None) -> BipartiteState:
    """State ``sum_i r_i^{1/2} |i>_1 (U_a |i>_1)_2`` from a density and a correlation operator."""
    tol = resolve(tol)
    rho1 = rho1 if isinstance(rho1, DensityOperator) else DensityOperator(rho1, tol)
    spec = spectral(rho1, tol)
    if ua.Q1.shape != (rho1.dim, rho1.dim):
        raise DimensionError("correlation operator domain does not match the density dimension")
    mismatch = float(np.linalg.norm(ua.Q1 - spec.support_projector))
    if mismatch > tol.tol_op * max(1, rho1.dim):
        raise ValidationError(f"correlation operator domain is not supp(rho1) (residual {mismatch:.3g})")
    basis = spec.eigenvectors[:, : spec.rank]
    weights = np.sqrt(spec.eigenvalues[: spec.rank])
    partners = ua.apply(basis)
    coeffs = (basis * weights) @ partners.T
    return BipartiteState.normalized(coeffs.reshape(-1), rho1.dim, ua.V.shape[0])


@dataclass(frozen=True, eq=False)
class SubsystemPicture:
    """Matched eigen-decompositions of both supports, linked by ``U_a``."""

    state: BipartiteState
    schmidt: SchmidtDecomposition
    ua: CorrelationOperator
    rho1: np.ndarray
    rho2: np.ndarray
    values: np.ndarray
    multiplicities: tuple[int, ...]
    blocks1: tuple[np.ndarray, ...]
    blocks2: tuple[np.ndarray, ...]
    Q1: tuple[np.ndarray, ...]
    Q2: tuple[np.ndarray, ...]
    Q1_null: np.ndarray
    Q2_null: np.ndarray
    twin_residual: float

    def rho(self, side: int) -> np.ndarray:
        return self._pick(side, self.rho1, self.rho2)

    def projectors(self, side: int) -> tuple[np.ndarray, ...]:
        return self._pick(side, self.Q1, self.Q2)

    def blocks(self, side: int) -> tuple[np.ndarray, ...]:
        return self._pick(side, self.blocks1, self.blocks2)

    def null(self, side: int) -> np.ndarray:
        return self._pick(side, self.Q1_null, self.Q2_null)

    def support(self, side: int) -> np.ndarray:
        return np.eye(self.null(side).shape[0]) - self.null(side)

    @staticmethod
    def _pick(side, first, second):
        if side == 1:
            return first
        if side == 2:
            return second
        raise ValueError("side must be 1 or 2")


def subsystem_picture(psi: BipartiteState, tol: Tolerances | None = None) -> SubsystemPicture:
    tol = resolve(tol)
    sd = canonical_schmidt(psi, tol)
    ua = correlation_operator(psi, tol, schmidt=sd)
    rho1 = reduced_density(psi, 1, tol).matrix
    rho2 = reduced_density(psi, 2, tol).matrix
    residual = float(np.linalg.norm(rho2 - ua.conjugate(rho1)))
    if residual > tol.tol_op:
        raise ValidationError(f"rho2 is not the U_a image of rho1 (residual {residual:.3g})")
    groups = sd.clusters(tol)
    blocks1 = tuple(sd.basis1[:, g] for g in groups)
    blocks2 = tuple(sd.basis2[:, g] for g in groups)
    q1 = tuple(b @ b.conj().T for b in blocks1)
    q2 = tuple(ua.conjugate(q) for q in q1)
    d1, d2 = psi.dims
    return SubsystemPicture(
        state=psi,
        schmidt=sd,
        ua=ua,
        rho1=rho1,
        rho2=rho2,
        values=np.array([sd.eigenvalues[g].mean() for g in groups]),
        multiplicities=tuple(len(g) for g in groups),
        blocks1=blocks1,
        blocks2=blocks2,
        Q1=q1,
        Q2=q2,
        Q1_null=np.eye(d1) - sum(q1),
        Q2_null=np.eye(d2) - sum(q2),
        twin_residual=residual,
    )
