"""Twin unitaries and twin Hermitians of a bipartite pure state.

A pair ``(U1, U2)`` is a twin pair for ``psi`` when ``(U1 (x) 1) psi ==
(1 (x) U2) psi``. In coefficient-matrix form this reads ``U1 C == C U2^T``,
which is how residuals are evaluated here.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.linalg import schur

from .errors import (
    CertificationError,
    CommutationError,
    DimensionError,
    NotCertifiableError,
)
from .hilbert import (
    BipartiteState,
    as_matrix,
    check_density,
    check_hermitian,
    check_unitary,
    commutator_norm,
    haar_unitary,
    partial_trace,
)
from .schmidt import SubsystemPicture
from .tolerances import Tolerances, resolve

__all__ = [
    "HermitianTwin",
    "MixedTwinCheck",
    "TwinCheck",
    "TwinPair",
    "certify",
    "compose",
    "hermitian_to_unitary",
    "identity_pair",
    "inverse",
    "is_mixed_twin",
    "is_twin_pair",
    "sample_twin",
    "swap_twin",
    "twin_hermitian_of",
    "twin_of",
    "twin_residual",
    "unitary_to_hermitian",
]


@dataclass(frozen=True, eq=False)
class TwinPair:
    U1: np.ndarray
    U2: np.ndarray
    residual: float


class TwinCheck(NamedTuple):
    ok: bool
    residual: float
    phase: float


class MixedTwinCheck(NamedTuple):
    ok: bool
    residual: float
    commutators: tuple[float, float]


def _check_dims(u1, u2, psi: BipartiteState):
    if u1.shape != (psi.d1, psi.d1) or u2.shape != (psi.d2, psi.d2):
        raise DimensionError(
            f"operators {u1.shape}, {u2.shape} do not match state dims {psi.dims}"
        )


def twin_residual(u1, u2, psi: BipartiteState, phase: float = 0.0) -> float:
    """``||(U1 (x) 1) psi - e^{i phase} (1 (x) U2) psi||``."""
    u1, u2 = as_matrix(u1), as_matrix(u2)
    _check_dims(u1, u2, psi)
    c = psi.matrix
    return float(np.linalg.norm(u1 @ c - np.exp(1j * phase) * (c @ u2.T)))


def is_twin_pair(u1, u2, psi: BipartiteState, allow_phase: bool = False,
                 tol: Tolerances | None = None) -> TwinCheck:
    """Check whether two unitaries act equally on ``psi``.

    With ``allow_phase`` the global phase ``lam`` minimizing
    ``||U1 psi - e^{i lam} U2 psi||`` is fitted and reported; the pair
    ``(U1, e^{i lam} U2)`` is then an exact twin pair.
    """
    tol = resolve(tol)
    u1, u2 = as_matrix(u1), as_matrix(u2)
    _check_dims(u1, u2, psi)
    check_unitary(u1, tol)
    check_unitary(u2, tol)
    phase = 0.0
    if allow_phase:
        c = psi.matrix
        overlap = np.vdot(c @ u2.T, u1 @ c)
        phase = float(np.angle(overlap)) if abs(overlap) > 0 else 0.0
    res = twin_residual(u1, u2, psi, phase)
    return TwinCheck(res < tol.tol_twin, res, phase)


def certify(u1, u2, psi: BipartiteState, tol: Tolerances | None = None) -> TwinPair:
    tol = resolve(tol)
    check = is_twin_pair(u1, u2, psi, tol=tol)
    if not check.ok:
        raise CertificationError(f"pair fails twin certification (residual {check.residual:.3g})")
    return TwinPair(as_matrix(u1).copy(), as_matrix(u2).copy(), check.residual)


def identity_pair(psi: BipartiteState) -> TwinPair:
    return TwinPair(np.eye(psi.d1, dtype=complex), np.eye(psi.d2, dtype=complex), 0.0)


def _require_commuting(op, picture: SubsystemPicture, side: int, tol: Tolerances):
    err = commutator_norm(op, picture.rho(side))
    if err > tol.tol_commute:
        raise CommutationError(
            f"operator does not commute with rho{side} (||[A, rho]|| = {err:.3g}); no twin exists"
        )
    return err


def twin_of(u1, picture: SubsystemPicture, tol: Tolerances | None = None) -> np.ndarray:
    """Second-factor twin of a first-factor unitary.

    ``U2 = U_a U1^{-1} U_a^{-1}`` on the support of ``rho2`` and the
    identity on its null space.
    """
    tol = resolve(tol)
    u1 = as_matrix(u1)
    if u1.shape != picture.rho1.shape:
        raise DimensionError(f"U1 has shape {u1.shape}, expected {picture.rho1.shape}")
    check_unitary(u1, tol)
    _require_commuting(u1, picture, 1, tol)
    return picture.ua.conjugate(u1.conj().T) + picture.Q2_null


def _assemble(picture: SubsystemPicture, reducees) -> tuple[np.ndarray, np.ndarray]:
    """Block unitaries on side 1 plus their side-2 images, identity on null spaces.

    In the Schmidt bases the side-2 reducee of ``W`` is ``W^T``.
    """
    u1 = picture.Q1_null.astype(complex)
    u2 = picture.Q2_null.astype(complex)
    for w, b1, b2 in zip(reducees, picture.blocks1, picture.blocks2):
        u1 = u1 + b1 @ w @ b1.conj().T
        u2 = u2 + b2 @ w.T @ b2.conj().T
    return u1, u2


def sample_twin(picture: SubsystemPicture, rng: np.random.Generator,
                tol: Tolerances | None = None) -> TwinPair:
    """Draw a random twin pair: an independent Haar unitary in each eigen-subspace."""
    reducees = [haar_unitary(d, rng) for d in picture.multiplicities]
    u1, u2 = _assemble(picture, reducees)
    return certify(u1, u2, picture.state, tol)


def _block_containing(vec: np.ndarray, picture: SubsystemPicture, tol: Tolerances) -> int | None:
    for j, q in enumerate(picture.Q1):
        if np.linalg.norm(q @ vec - vec) < tol.tol_op * max(1.0, np.sqrt(vec.size)):
            return j
    return None


def _rotation(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Unitary mapping unit vector ``a`` to unit vector ``b`` (phased Householder)."""
    n = a.size
    overlap = np.vdot(b, a)
    theta = float(np.angle(overlap)) if abs(overlap) > 0 else 0.0
    target = np.exp(1j * theta) * b
    w = a - target
    norm = np.linalg.norm(w)
    h = np.eye(n, dtype=complex)
    if norm > 1e-14:
        h -= 2.0 * np.outer(w, w.conj()) / norm**2
    return np.exp(-1j * theta) * h


def swap_twin(phi, phi_prime, picture: SubsystemPicture, tol: Tolerances | None = None) -> TwinPair:
    """Twin pair whose first unitary maps ``phi`` onto ``phi_prime``.

    Both vectors must lie in a single positive-eigenvalue eigen-subspace of
    ``rho1``; otherwise no twin unitary can connect them.
    """
    tol = resolve(tol)
    phi = np.asarray(phi, dtype=complex)
    phi_prime = np.asarray(phi_prime, dtype=complex)
    if phi.shape != (picture.rho1.shape[0],) or phi_prime.shape != phi.shape:
        raise DimensionError("vectors must live in the first factor space")
    for v in (phi, phi_prime):
        if abs(np.linalg.norm(v) - 1.0) > tol.tol_norm:
            raise ValueError("phi and phi_prime must be unit vectors")
    j = _block_containing(phi, picture, tol)
    if j is None or _block_containing(phi_prime, picture, tol) != j:
        raise NotCertifiableError(
            "vectors do not share a positive-eigenvalue eigen-subspace of rho1; "
            "not equiprobability-certifiable"
        )
    b = picture.blocks1[j]
    a_loc, b_loc = b.conj().T @ phi, b.conj().T @ phi_prime
    reducees = [np.eye(d, dtype=complex) for d in picture.multiplicities]
    reducees[j] = _rotation(a_loc, b_loc)
    u1, u2 = _assemble(picture, reducees)
    return certify(u1, u2, picture.state, tol)


def compose(p: TwinPair, q: TwinPair, psi: BipartiteState, tol: Tolerances | None = None) -> TwinPair:
    """Group product ``p x q = (p.U1 q.U1, q.U2 p.U2)``; side 2 composes in reverse."""
    try:
        return certify(p.U1 @ q.U1, q.U2 @ p.U2, psi, tol)
    except CertificationError as exc:
        raise CertificationError(f"composition lost twin certification: {exc}") from exc


def inverse(p: TwinPair, psi: BipartiteState, tol: Tolerances | None = None) -> TwinPair:
    return certify(p.U1.conj().T, p.U2.conj().T, psi, tol)


@dataclass(frozen=True, eq=False)
class HermitianTwin:
    H1: np.ndarray
    H2: np.ndarray
    picture: SubsystemPicture


def twin_hermitian_of(h1, picture: SubsystemPicture, tol: Tolerances | None = None) -> HermitianTwin:
    tol = resolve(tol)
    h1 = as_matrix(h1)
    if h1.shape != picture.rho1.shape:
        raise DimensionError(f"H1 has shape {h1.shape}, expected {picture.rho1.shape}")
    check_hermitian(h1, tol)
    _require_commuting(h1, picture, 1, tol)
    h2 = picture.ua.conjugate(h1)
    h2 = (h2 + h2.conj().T) / 2
    return HermitianTwin(h1.copy(), h2, picture)


def hermitian_to_unitary(h, picture: SubsystemPicture, side: int = 1,
                         tol: Tolerances | None = None) -> np.ndarray:
    """``exp(iH)`` on the support of ``rho_side``, identity on its null space."""
    tol = resolve(tol)
    h = as_matrix(h)
    if h.shape != picture.rho(side).shape:
        raise DimensionError("operator does not match the chosen factor space")
    check_hermitian(h, tol)
    _require_commuting(h, picture, side, tol)
    u = picture.null(side).astype(complex)
    for b in picture.blocks(side):
        local = b.conj().T @ h @ b
        w, v = np.linalg.eigh((local + local.conj().T) / 2)
        u = u + b @ (v * np.exp(1j * w)) @ v.conj().T @ b.conj().T
    return u


def unitary_to_hermitian(u, picture: SubsystemPicture, side: int = 1,
                         tol: Tolerances | None = None) -> np.ndarray:
    """Hermitian generator on the support, eigenphases taken in ``[0, 2*pi)``; zero on the null space."""
    tol = resolve(tol)
    u = as_matrix(u)
    if u.shape != picture.rho(side).shape:
        raise DimensionError("operator does not match the chosen factor space")
    check_unitary(u, tol)
    _require_commuting(u, picture, side, tol)
    h = np.zeros_like(u, dtype=complex)
    for b in picture.blocks(side):
        local = b.conj().T @ u @ b
        t, z = schur(local, output="complex")
        phases = np.mod(np.angle(np.diag(t)), 2 * np.pi)
        h = h + b @ (z * phases) @ z.conj().T @ b.conj().T
    return (h + h.conj().T) / 2


def is_mixed_twin(h1, h2, rho12, d1: int, d2: int, tol: Tolerances | None = None) -> MixedTwinCheck:
    """Check ``(H1 (x) 1) rho12 == (1 (x) H2) rho12`` for a bipartite density operator.

    When the identity holds, the implied commutations with both reduced
    densities are verified as well.
    """
    tol = resolve(tol)
    h1, h2, rho = as_matrix(h1), as_matrix(h2), as_matrix(rho12)
    if h1.shape != (d1, d1) or h2.shape != (d2, d2) or rho.shape != (d1 * d2, d1 * d2):
        raise DimensionError("operator shapes do not match the factor dimensions")
    check_density(rho, tol)
    check_hermitian(h1, tol)
    check_hermitian(h2, tol)
    lhs = np.kron(h1, np.eye(d2)) @ rho
    rhs = np.kron(np.eye(d1), h2) @ rho
    res = float(np.linalg.norm(lhs - rhs))
    comms = (
        commutator_norm(h1, partial_trace(rho, d1, d2, 1)),
        commutator_norm(h2, partial_trace(rho, d1, d2, 2)),
    )
    ok = res < tol.tol_twin
    if ok and max(comms) > tol.tol_commute:
        raise CertificationError(
            f"mixed twin identity holds but commutators are {comms}; numerical breakdown"
        )
    return MixedTwinCheck(ok, res, comms)
