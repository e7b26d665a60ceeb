"""Dense complex linear algebra on finite tensor-product spaces.

Vectors and operators are plain numpy arrays. Two wrapper types carry the
validated structure the rest of the package relies on: :class:`BipartiteState`
(a unit vector with recorded factor dimensions, row-major ``k*d2 + l``) and
:class:`DensityOperator` (a validated density matrix with a cached, clustered
spectral decomposition).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DimensionError, NormError, ValidationError
from .tolerances import Tolerances, resolve

__all__ = [
    "BipartiteState",
    "DensityOperator",
    "Spectrum",
    "as_matrix",
    "basis_vector",
    "check_density",
    "check_hermitian",
    "check_projector",
    "check_unitary",
    "cluster_descending",
    "commutator_norm",
    "haar_unitary",
    "hs_distance",
    "hs_inner",
    "partial_scalar_product",
    "partial_trace",
    "reduced_density",
    "spectral",
    "tensor",
]


def _vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=complex)
    if v.ndim != 1:
        raise DimensionError(f"expected a vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValidationError("vector has non-finite entries")
    return v


def as_matrix(x) -> np.ndarray:
    if isinstance(x, DensityOperator):
        return x.matrix
    m = np.asarray(x, dtype=complex)
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got shape {m.shape}")
    return m


def basis_vector(dim: int, index: int) -> np.ndarray:
    v = np.zeros(dim, dtype=complex)
    v[index] = 1.0
    return v


def tensor(a, b) -> np.ndarray:
    """Kronecker product of two vectors, ``out[k*len(b) + l] = a[k]*b[l]``."""
    return np.kron(_vector(a), _vector(b))


@dataclass(frozen=True, eq=False)
class BipartiteState:
    amplitudes: np.ndarray
    d1: int
    d2: int
    tol: Tolerances = field(default=None, repr=False)

    def __post_init__(self):
        amps = _vector(self.amplitudes).copy()
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)
        if self.d1 < 1 or self.d2 < 1:
            raise DimensionError("factor dimensions must be positive")
        if amps.size != self.d1 * self.d2:
            raise DimensionError(
                f"{amps.size} amplitudes do not fit factor dims {self.d1}x{self.d2}"
            )
        tol = resolve(self.tol)
        norm = np.linalg.norm(amps)
        if abs(norm - 1.0) > tol.tol_norm:
            raise NormError(f"state norm {norm!r} differs from 1 by more than {tol.tol_norm}")

    @classmethod
    def from_matrix(cls, coeffs, tol: Tolerances | None = None) -> "BipartiteState":
        """Build from the ``d1 x d2`` coefficient matrix ``<k|<l|psi>``."""
        c = as_matrix(coeffs)
        return cls(c.reshape(-1), c.shape[0], c.shape[1], tol=tol)

    @classmethod
    def normalized(cls, amplitudes, d1: int, d2: int) -> "BipartiteState":
        v = _vector(amplitudes)
        return cls(v / np.linalg.norm(v), d1, d2)

    @classmethod
    def product(cls, a, b) -> "BipartiteState":
        a, b = _vector(a), _vector(b)
        return cls(tensor(a, b), a.size, b.size)

    @property
    def matrix(self) -> np.ndarray:
        return self.amplitudes.reshape(self.d1, self.d2)

    @property
    def dims(self) -> tuple[int, int]:
        return self.d1, self.d2

    def projector(self) -> np.ndarray:
        return np.outer(self.amplitudes, self.amplitudes.conj())

    def __repr__(self):
        return f"BipartiteState(d1={self.d1}, d2={self.d2})"


def partial_scalar_product(bra, psi: BipartiteState) -> np.ndarray:
    """Return ``<bra|_1 |psi>_12``, a vector in the second factor space."""
    b = _vector(bra)
    if b.size != psi.d1:
        raise DimensionError(f"bra has dim {b.size}, first factor has dim {psi.d1}")
    return b.conj() @ psi.matrix


def partial_trace(rho12, d1: int, d2: int, keep: int) -> np.ndarray:
    """Partial trace of an operator on ``H1 (x) H2``, keeping factor ``keep``."""
    m = as_matrix(rho12)
    if m.shape != (d1 * d2, d1 * d2):
        raise DimensionError(f"operator shape {m.shape} does not match dims {d1}x{d2}")
    t = m.reshape(d1, d2, d1, d2)
    if keep == 1:
        return np.einsum("alcl->ac", t)
    if keep == 2:
        return np.einsum("kakc->ac", t)
    raise ValueError("keep must be 1 or 2")


def reduced_density(psi: BipartiteState, side: int, tol: Tolerances | None = None) -> "DensityOperator":
    c = psi.matrix
    if side == 1:
        rho = c @ c.conj().T
    elif side == 2:
        rho = c.T @ c.conj()
    else:
        raise ValueError("side must be 1 or 2")
    return DensityOperator(rho, tol=tol)


def hs_inner(a, b) -> complex:
    """Hilbert-Schmidt scalar product ``tr(A^dagger B)``."""
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


def hs_distance(a, b) -> float:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def commutator_norm(a, b) -> float:
    a, b = as_matrix(a), as_matrix(b)
    return float(np.linalg.norm(a @ b - b @ a))


def check_hermitian(m, tol: Tolerances | None = None) -> float:
    m = as_matrix(m)
    if m.shape[0] != m.shape[1]:
        raise DimensionError("hermitian operator must be square")
    err = float(np.linalg.norm(m - m.conj().T))
    if err > resolve(tol).tol_op:
        raise ValidationError(f"operator is not hermitian (residual {err:.3g})")
    return err


def check_unitary(u, tol: Tolerances | None = None) -> float:
    u = as_matrix(u)
    if u.shape[0] != u.shape[1]:
        raise DimensionError("unitary operator must be square")
    err = float(np.linalg.norm(u.conj().T @ u - np.eye(u.shape[0])))
    if err > resolve(tol).tol_op:
        raise ValidationError(f"operator is not unitary (residual {err:.3g})")
    return err


def check_projector(p, tol: Tolerances | None = None) -> float:
    p = as_matrix(p)
    if p.shape[0] != p.shape[1]:
        raise DimensionError("projector must be square")
    err = max(float(np.linalg.norm(p @ p - p)), float(np.linalg.norm(p - p.conj().T)))
    if err > resolve(tol).tol_op:
        raise ValidationError(f"operator is not an orthogonal projector (residual {err:.3g})")
    return err


def check_density(m, tol: Tolerances | None = None) -> None:
    tol = resolve(tol)
    m = as_matrix(m)
    check_hermitian(m, tol)
    tr = np.trace(m)
    if abs(tr - 1.0) > tol.tol_op:
        raise ValidationError(f"density trace {tr.real:.12g} is not 1")
    low = np.linalg.eigvalsh((m + m.conj().T) / 2)[0]
    if low < -tol.tol_psd:
        raise ValidationError(f"density has negative eigenvalue {low:.3g}")


def cluster_descending(values, eps: float) -> list[np.ndarray]:
    """Group indices of a descending sequence into runs closer than ``eps``.

    Consecutive gaps below ``eps`` chain together, which is the transitive
    closure of the pairwise rule on a sorted list.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return []
    groups, start = [], 0
    for i in range(1, values.size):
        if abs(values[i - 1] - values[i]) >= eps:
            groups.append(np.arange(start, i))
            start = i
    groups.append(np.arange(start, values.size))
    return groups


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Clustered spectral data of a density operator.

    ``eigenvalues``/``eigenvectors`` cover the whole space (descending).
    ``values[j]``, ``multiplicities[j]`` and ``projectors[j]`` describe the
    distinct positive eigenvalues; ``null_projector`` covers the rest.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    values: np.ndarray
    multiplicities: tuple[int, ...]
    groups: tuple[np.ndarray, ...]
    projectors: tuple[np.ndarray, ...]
    null_projector: np.ndarray

    @property
    def rank(self) -> int:
        return int(sum(self.multiplicities))

    @property
    def support_projector(self) -> np.ndarray:
        return np.eye(self.eigenvectors.shape[0]) - self.null_projector

    def block_basis(self, j: int) -> np.ndarray:
        return self.eigenvectors[:, self.groups[j]]

    def reconstruct(self) -> np.ndarray:
        return sum(r * q for r, q in zip(self.values, self.projectors))


def _spectral_from_matrix(m: np.ndarray, tol: Tolerances) -> Spectrum:
    w, v = np.linalg.eigh((m + m.conj().T) / 2)
    order = np.argsort(w)[::-1]
    w, v = w[order], v[:, order]
    rank = int(np.sum(w >= tol.eps_rank))
    groups = tuple(cluster_descending(w[:rank], tol.eps_cluster))
    values = np.array([w[g].mean() for g in groups])
    projectors = tuple(v[:, g] @ v[:, g].conj().T for g in groups)
    nv = v[:, rank:]
    return Spectrum(
        eigenvalues=w,
        eigenvectors=v,
        values=values,
        multiplicities=tuple(len(g) for g in groups),
        groups=groups,
        projectors=projectors,
        null_projector=nv @ nv.conj().T,
    )


@dataclass(frozen=True, eq=False)
class DensityOperator:
    matrix: np.ndarray
    tol: Tolerances = field(default=None, repr=False)

    def __post_init__(self):
        m = as_matrix(self.matrix).copy()
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        check_density(m, resolve(self.tol))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def spectrum(self) -> Spectrum:
        return _spectral_from_matrix(self.matrix, resolve(self.tol))


def spectral(rho, tol: Tolerances | None = None) -> Spectrum:
    """Eigen-decomposition with clustered eigen-projectors and null projector."""
    if isinstance(rho, DensityOperator) and tol is None:
        return rho.spectrum
    m = as_matrix(rho)
    check_hermitian(m, tol)
    return _spectral_from_matrix(m, resolve(tol))


def haar_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed ``n x n`` unitary (QR of a Ginibre matrix, phase-fixed)."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))
