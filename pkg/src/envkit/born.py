"""Probability rule for subsystem states, built up stage by stage.

Each function certifies one construction numerically:

* equal probability of eigenvectors sharing an eigenvalue (twin swaps),
* counting of equal-amplitude branches after fine-graining a rational
  spectrum with an ancilla,
* continuity along rational or truncated approximating sequences,
* the closest density operator having a given vector as eigenvector,
* pure isolated states as limits of correlated ones,

plus the trace form of the rule and its finite additivity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.linalg import null_space

from .errors import CertificationError, DimensionError, NormError, NotCertifiableError, ValidationError
from .hilbert import (
    BipartiteState,
    DensityOperator,
    as_matrix,
    check_density,
    check_projector,
    hs_distance,
    reduced_density,
    spectral,
)
from .schmidt import SubsystemPicture, canonical_schmidt, subsystem_picture
from .tolerances import Tolerances, resolve
from .twins import TwinPair, swap_twin

__all__ = [
    "AdditivityResult",
    "ContinuitySequence",
    "ContinuityStep",
    "CountingResult",
    "FinegrainUnitary",
    "IsolatedLimit",
    "IsolatedStep",
    "PipelineResult",
    "ProbabilityReport",
    "ROUTES",
    "RationalSpectrum",
    "StageOneResult",
    "TripartiteState",
    "additivity_check",
    "additivity_induction",
    "born_probability",
    "closest_eigenstate_density",
    "closest_oracle",
    "continuity_sequence",
    "counting_probabilities",
    "finegrain_state",
    "finegrain_unitary",
    "isolated_state_limit",
    "lueders_state",
    "mixture_probability",
    "pipeline",
    "rational_spectrum",
    "selective_lueders",
    "stage_one_certificate",
]

ROUTES = ("stage-one-counting", "eq-16", "eq-19", "eq-22", "eq-23", "trace-rule")


@dataclass
class ProbabilityReport:
    event: dict
    value: float
    route: str
    residuals: dict = field(default_factory=dict)
    exact: Fraction | None = None
    # Slot for a hypothetical extra argument of the rule; never populated.
    unknown: object = None

    def __post_init__(self):
        if self.route not in ROUTES:
            raise ValueError(f"unknown route {self.route!r}")


def _clamped(value: float, tol: float) -> float:
    if value < -tol or value > 1 + tol:
        raise CertificationError(f"probability {value!r} outside [0, 1]")
    return min(1.0, max(0.0, value))


def _density(rho, tol: Tolerances) -> np.ndarray:
    m = as_matrix(rho)
    if not isinstance(rho, DensityOperator):
        check_density(m, tol)
    return m


def _unit(phi, dim: int, tol: Tolerances) -> np.ndarray:
    v = np.asarray(phi, dtype=complex)
    if v.shape != (dim,):
        raise DimensionError(f"vector of shape {v.shape} does not live in dimension {dim}")
    if abs(np.linalg.norm(v) - 1.0) > tol.tol_norm:
        raise NormError("event vector must have unit norm")
    return v


# -- stage one ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StageOneResult:
    verdict: bool
    pair: TwinPair | None
    reason: str


def stage_one_certificate(psi: BipartiteState, phi, phi_prime,
                          picture: SubsystemPicture | None = None,
                          tol: Tolerances | None = None) -> StageOneResult:
    """Certify equal probability of two vectors via a twin swap."""
    picture = subsystem_picture(psi, tol) if picture is None else picture
    try:
        pair = swap_twin(phi, phi_prime, picture, tol)
    except NotCertifiableError as exc:
        return StageOneResult(False, None, f"not certifiable by stage one: {exc}")
    return StageOneResult(True, pair, "swap twin pair certified")


# -- stage two ---------------------------------------------------------------


@dataclass(frozen=True)
class RationalSpectrum:
    numerators: tuple[int, ...]
    denominator: int
    multiplicities: tuple[int, ...]
    exact: bool
    error: float
    values: tuple[float, ...] = ()

    def __post_init__(self):
        if sum(d * m for d, m in zip(self.multiplicities, self.numerators)) != self.denominator:
            raise ValueError("sum_j d_j m_j must equal the common denominator")

    @property
    def fractions(self) -> tuple[Fraction, ...]:
        return tuple(Fraction(m, self.denominator) for m in self.numerators)


def _common_denominator_approximation(values, max_denominator: int) -> tuple[list[Fraction], int]:
    exact = [Fraction(float(v)) for v in values]
    limit = max_denominator
    while True:
        approx = [f.limit_denominator(limit) for f in exact]
        common = math.lcm(*(a.denominator for a in approx))
        if common <= max_denominator:
            return approx, common
        # Bounds at or above the largest denominator reproduce the same approximants.
        limit = max(a.denominator for a in approx) - 1


def _largest_remainder(values, mults, numerators, common):
    ideal = [v * common for v in values]
    m = [max(1, n) for n in numerators]
    deficit = common - sum(d * k for d, k in zip(mults, m))
    for _ in range(4 * len(m) * max(1, common)):
        if deficit == 0:
            break
        if deficit > 0:
            cand = [j for j, d in enumerate(mults) if d <= deficit]
            if not cand:
                break
            j = max(cand, key=lambda j: ideal[j] - m[j])
            m[j] += 1
            deficit -= mults[j]
        else:
            cand = [j for j in range(len(m)) if m[j] > 1]
            if not cand:
                break
            j = min(cand, key=lambda j: ideal[j] - m[j])
            m[j] -= 1
            deficit += mults[j]
    return m, sum(d * k for d, k in zip(mults, m))


def rational_values(values, multiplicities, max_denominator: int,
                    tol: Tolerances | None = None) -> RationalSpectrum:
    """Simultaneous rational approximation ``values[j] ~ m_j / M`` with ``M <= max_denominator``.

    Two candidates are compared: per-value continued-fraction approximants
    brought to their least common denominator, and a direct split of
    ``max_denominator`` itself. Both are repaired by largest remainders so
    that ``sum_j d_j m_j == M`` holds exactly; the more accurate one wins,
    preferring the first on ties.
    """
    tol = resolve(tol)
    if max_denominator < 1:
        raise ValueError("max_denominator must be at least 1")
    values = [float(v) for v in values]
    mults = [int(d) for d in multiplicities]
    if sum(mults) > max_denominator:
        # Every m_j >= 1, so sum_j d_j m_j >= sum_j d_j.
        raise ValueError(f"max_denominator {max_denominator} is below the rank {sum(mults)}")
    approx, common = _common_denominator_approximation(values, max_denominator)
    candidates = [
        _largest_remainder(values, mults, [int(a * common) for a in approx], common),
        _largest_remainder(values, mults, [int(v * max_denominator) for v in values], max_denominator),
    ]
    best = None
    for nums, common in candidates:
        g = math.gcd(common, *nums)
        nums, common = [n // g for n in nums], common // g
        error = max(abs(n / common - v) for n, v in zip(nums, values))
        if best is None or error < best[2] - tol.tol_exact:
            best = (nums, common, error)
    nums, common, error = best
    return RationalSpectrum(tuple(nums), common, tuple(mults), error < tol.tol_exact, error, tuple(values))


def rational_spectrum(rho1, max_denominator: int, tol: Tolerances | None = None) -> RationalSpectrum:
    tol = resolve(tol)
    spec = spectral(rho1 if isinstance(rho1, DensityOperator) else DensityOperator(rho1, tol), tol)
    return rational_values(spec.values, spec.multiplicities, max_denominator, tol)


@dataclass(frozen=True, eq=False)
class TripartiteState:
    amplitudes: np.ndarray
    dims: tuple[int, int, int]
    source: BipartiteState | None = None
    spectrum: RationalSpectrum | None = None

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.dims)

    def cut(self, kind: str) -> BipartiteState:
        """View as a bipartite state across ``"1|23"`` or ``"12|3"``."""
        d1, d2, d3 = self.dims
        if kind == "1|23":
            return BipartiteState(self.amplitudes, d1, d2 * d3)
        if kind == "12|3":
            return BipartiteState(self.amplitudes, d1 * d2, d3)
        raise ValueError(f"unknown cut {kind!r}")


def _labels(spec: RationalSpectrum):
    """Enumerate ``(j, k_j, l_j)`` lexicographically onto ``0..M-1``."""
    n = 0
    for j, (d, m) in enumerate(zip(spec.multiplicities, spec.numerators)):
        for k in range(d):
            for l in range(m):
                yield j, k, l, n
                n += 1


def _matched_schmidt(psi: BipartiteState, spec: RationalSpectrum, tol: Tolerances):
    if not spec.exact:
        raise ValueError("fine-graining needs an exact rational spectrum")
    sd = canonical_schmidt(psi, tol)
    groups = sd.clusters(tol)
    if tuple(len(g) for g in groups) != spec.multiplicities:
        raise ValueError("rational spectrum does not match the state's Schmidt structure")
    for g, frac in zip(groups, spec.fractions):
        if np.max(np.abs(sd.eigenvalues[g] - float(frac))) > tol.tol_recon:
            raise ValueError("rational spectrum does not match the state's eigenvalues")
    return sd, groups


def _ancilla_dims(psi, spec, d2p, d3):
    big_m = spec.denominator
    d2p = max(psi.d2, big_m) if d2p is None else d2p
    d3 = big_m if d3 is None else d3
    if d2p < max(psi.d2, big_m) or d3 < big_m:
        raise DimensionError(
            f"ancilla dims ({d2p}, {d3}) too small: need d2' >= {max(psi.d2, big_m)}, d3 >= {big_m}"
        )
    return d2p, d3


def finegrain_state(psi: BipartiteState, spec: RationalSpectrum, d2p: int | None = None,
                    d3: int | None = None, tol: Tolerances | None = None) -> TripartiteState:
    """Equal-amplitude state ``sum (1/M)^{1/2} |j,k_j>_1 |j,k_j,l_j>_2' |j,k_j,l_j>_3``."""
    tol = resolve(tol)
    sd, groups = _matched_schmidt(psi, spec, tol)
    d2p, d3 = _ancilla_dims(psi, spec, d2p, d3)
    t = np.zeros((psi.d1, d2p, d3), dtype=complex)
    amp = 1.0 / math.sqrt(spec.denominator)
    for j, k, _, n in _labels(spec):
        t[:, n, n] += amp * sd.basis1[:, groups[j][k]]
    return TripartiteState(t.reshape(-1), (psi.d1, d2p, d3), psi, spec)


@dataclass(frozen=True, eq=False)
class FinegrainUnitary:
    U23: np.ndarray
    state: TripartiteState
    state_residual: float
    rho1_residual: float
    unitarity_residual: float


def finegrain_unitary(psi: BipartiteState, spec: RationalSpectrum, d2p: int | None = None,
                      d3: int | None = None, tol: Tolerances | None = None) -> FinegrainUnitary:
    """Unitary on ``H2' (x) H3`` sending Schmidt partners (with ancilla in ``|0>``) to fine-grained branches.

    ``H2`` is embedded as the first ``d2`` coordinates of ``H2'``. Both
    orthonormal sets are completed to full bases through the null space of
    their adjoints, and the unitary maps one completed basis onto the other.
    """
    tol = resolve(tol)
    sd, groups = _matched_schmidt(psi, spec, tol)
    d2p, d3 = _ancilla_dims(psi, spec, d2p, d3)
    dim = d2p * d3
    pre = np.zeros((dim, sd.rank), dtype=complex)
    img = np.zeros((dim, sd.rank), dtype=complex)
    col = {}
    for j, group in enumerate(groups):
        for k, i in enumerate(group):
            col[(j, k)] = len(col)
            partner = np.zeros(d2p, dtype=complex)
            partner[: psi.d2] = sd.basis2[:, i]
            pre[:, col[(j, k)]] = np.kron(partner, np.eye(d3)[0])
    for j, k, _, n in _labels(spec):
        img[n * d3 + n, col[(j, k)]] = 1.0 / math.sqrt(spec.numerators[j])
    full_pre = np.hstack([pre, null_space(pre.conj().T)])
    full_img = np.hstack([img, null_space(img.conj().T)])
    u23 = full_img @ full_pre.conj().T

    start = np.zeros((psi.d1, d2p, d3), dtype=complex)
    start[:, : psi.d2, 0] = psi.matrix
    out = start.reshape(psi.d1, dim) @ u23.T
    result = TripartiteState(out.reshape(-1), (psi.d1, d2p, d3), psi, spec)
    target = finegrain_state(psi, spec, d2p, d3, tol)
    rho1_before = reduced_density(psi, 1, tol).matrix
    rho1_after = reduced_density(result.cut("1|23"), 1, tol).matrix
    return FinegrainUnitary(
        U23=u23,
        state=result,
        state_residual=float(np.linalg.norm(result.amplitudes - target.amplitudes)),
        rho1_residual=hs_distance(rho1_before, rho1_after),
        unitarity_residual=float(np.linalg.norm(u23.conj().T @ u23 - np.eye(dim))),
    )


@dataclass(frozen=True, eq=False)
class CountingResult:
    blocks: tuple[ProbabilityReport, ...]
    vectors: tuple[ProbabilityReport, ...]
    counts: tuple[int, ...]
    coefficient_residual: float


def counting_probabilities(phi123: TripartiteState, tol: Tolerances | None = None) -> CountingResult:
    """Probabilities of the eigen-projectors of ``rho1`` by counting equiprobable branches.

    The ``(1+2)+3`` Schmidt coefficients must all equal ``M^{-1/2}``. The
    number of branches falling into ``R(Q1^j) (x) H2'`` is then counted as
    ``tr((Q1^j (x) 1) P)`` with ``P`` the span of the branch vectors.
    """
    tol = resolve(tol)
    if phi123.spectrum is None:
        raise ValueError("tripartite state carries no rational spectrum provenance")
    big_m = phi123.spectrum.denominator
    d1, d2p, _ = phi123.dims
    sd = canonical_schmidt(phi123.cut("12|3"), tol)
    target = 1.0 / math.sqrt(big_m)
    if sd.rank != big_m:
        raise CertificationError(f"(1+2)+3 cut has {sd.rank} branches, expected {big_m}")
    coeff_res = float(np.max(np.abs(sd.coefficients - target)))
    if coeff_res > tol.tol_op:
        raise CertificationError(f"branches are not equiprobable (deviation {coeff_res:.3g})")

    spec1 = spectral(reduced_density(phi123.cut("1|23"), 1, tol), tol)
    branches = sd.basis1.reshape(d1, d2p, big_m)
    blocks, vectors, counts = [], [], []
    for j, (q, d_j) in enumerate(zip(spec1.projectors, spec1.multiplicities)):
        weight = float(np.sum(np.abs(np.einsum("ab,bcn->acn", q, branches)) ** 2))
        count = int(round(weight))
        if abs(weight - count) > 1e-8 or count % d_j:
            raise CertificationError(f"branch count {weight!r} for block {j} is not an integer multiple of d_j")
        counts.append(count)
        p_block = Fraction(count, big_m)
        p_vec = p_block / d_j
        blocks.append(ProbabilityReport(
            event={"kind": "projector", "block": j, "rank": d_j},
            value=float(p_block), route="stage-one-counting",
            residuals={"count": abs(weight - count), "coefficients": coeff_res},
            exact=p_block,
        ))
        vectors.append(ProbabilityReport(
            event={"kind": "vector", "block": j, "vector": spec1.block_basis(j)[:, 0]},
            value=float(p_vec), route="stage-one-counting",
            residuals={"count": abs(weight - count), "coefficients": coeff_res},
            exact=p_vec,
        ))
    return CountingResult(tuple(blocks), tuple(vectors), tuple(counts), coeff_res)


# -- stage three -------------------------------------------------------------


@dataclass(frozen=True)
class ContinuityStep:
    n: int
    eigenvalues: tuple[float, ...]
    hs_residual: float
    rational: tuple[Fraction, ...] | None = None
    bound: int | None = None


@dataclass(frozen=True, eq=False)
class ContinuitySequence:
    values: tuple[float, ...]
    multiplicities: tuple[int, ...]
    rational: tuple[ContinuityStep, ...]
    truncation: tuple[ContinuityStep, ...]

    @property
    def monotone(self) -> bool:
        return all(_nonincreasing([s.hs_residual for s in seq]) for seq in (self.rational, self.truncation))

    def rows(self) -> list[dict]:
        out = []
        for route, seq in (("rational", self.rational), ("truncation", self.truncation)):
            for s in seq:
                row = {"route": route, "n": s.n, "bound": s.bound, "hs_residual": s.hs_residual}
                for j, r in enumerate(s.eigenvalues):
                    row[f"p{j}"] = r
                out.append(row)
        return out


def _nonincreasing(xs, slack: float = 1e-15) -> bool:
    return all(b <= a + slack for a, b in zip(xs, xs[1:]))


def continuity_sequence(rho1, n_max: int, tol: Tolerances | None = None) -> ContinuitySequence:
    """Approximating sequences ``rho1^n -> rho1`` with the eigen-projectors held fixed.

    ``rational``: step ``n`` uses the best rational spectrum found with
    denominators up to ``10**n`` (the running best is kept, so the residual
    never grows); bounds below the rank admit no spectrum and are skipped. ``truncation``: the top ``n`` eigen-blocks, rescaled to unit
    trace. The probability of an eigenvector of block ``j`` at step ``n`` is
    the step's ``j``-th eigenvalue.
    """
    tol = resolve(tol)
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    rho = _density(rho1, tol)
    spec = spectral(rho, tol)
    values, mults, proj = spec.values, spec.multiplicities, spec.projectors

    def assemble(eigs):
        return sum(r * q for r, q in zip(eigs, proj))

    rational, best = [], None
    for n in range(1, n_max + 1):
        bound = 10**n
        if bound < sum(mults):
            continue
        rs = rational_values(values, mults, bound, tol)
        fr = rs.fractions
        res = hs_distance(rho, assemble([float(f) for f in fr]))
        if best is None or res < best[1]:
            best = (fr, res)
        fr, res = best
        rational.append(ContinuityStep(n, tuple(float(f) for f in fr), res, fr, bound))

    truncation = []
    for n in range(1, min(n_max, len(values)) + 1):
        total = sum(d * r for d, r in zip(mults[:n], values[:n]))
        eigs = tuple(float(r / total) if j < n else 0.0 for j, r in enumerate(values))
        truncation.append(ContinuityStep(n, eigs, hs_distance(rho, assemble(eigs))))
    return ContinuitySequence(tuple(values), tuple(mults), tuple(rational), tuple(truncation))


# -- stage four --------------------------------------------------------------


def closest_eigenstate_density(rho, phi, tol: Tolerances | None = None) -> tuple[np.ndarray, float]:
    """Closest density operator having ``phi`` as an eigenvector, and its eigenvalue."""
    tol = resolve(tol)
    m = _density(rho, tol)
    v = _unit(phi, m.shape[0], tol)
    p = np.outer(v, v.conj())
    perp = np.eye(m.shape[0]) - p
    r = float(np.real(np.vdot(v, m @ v)))
    return r * p + perp @ m @ perp, r


def closest_oracle(rho, phi, samples: int, rng: np.random.Generator,
                   tol: Tolerances | None = None, batch: int = 10_000) -> tuple[float, np.ndarray]:
    """Random search over mixtures ``r |phi><phi| + (1-r) sigma`` with ``sigma`` supported off ``phi``.

    ``r`` is uniform on ``[0, 1]``; ``sigma`` is a compressed Wishart matrix of
    random rank. Returns the smallest Hilbert-Schmidt distance to ``rho``
    found and the candidate attaining it.
    """
    tol = resolve(tol)
    m = _density(rho, tol)
    d = m.shape[0]
    if d > 6:
        raise ValueError("the oracle is meant for dimensions up to 6")
    v = _unit(phi, d, tol)
    p = np.outer(v, v.conj())
    perp = np.eye(d) - p
    best, best_cand = np.inf, None
    done = 0
    while done < samples:
        b = min(batch, samples - done)
        r = rng.random(b)
        g = rng.standard_normal((b, d, d)) + 1j * rng.standard_normal((b, d, d))
        ranks = rng.integers(1, d + 1, size=b)
        g *= (np.arange(d)[None, None, :] < ranks[:, None, None])
        tau = g @ np.conj(np.swapaxes(g, 1, 2))
        sigma = perp @ tau @ perp
        tr = np.real(np.trace(sigma, axis1=1, axis2=2))
        if d == 1:
            sigma = np.zeros_like(sigma)
        else:
            sigma /= tr[:, None, None]
        cand = r[:, None, None] * p + (1 - r)[:, None, None] * sigma
        dist = np.linalg.norm((cand - m).reshape(b, -1), axis=1)
        i = int(np.argmin(dist))
        if dist[i] < best:
            best, best_cand = float(dist[i]), cand[i].copy()
        done += b
    return best, best_cand


def _check_resolution(projectors, dim: int, tol: Tolerances, target=None):
    ps = [as_matrix(p) for p in projectors]
    if not ps:
        raise ValidationError("empty projector family")
    for p in ps:
        if p.shape != (dim, dim):
            raise DimensionError("projector dimension mismatch")
        check_projector(p, tol)
    for i in range(len(ps)):
        for k in range(i + 1, len(ps)):
            if np.linalg.norm(ps[i] @ ps[k]) > tol.tol_op:
                raise ValidationError(f"projectors {i} and {k} are not mutually orthogonal")
    total = np.eye(dim) if target is None else target
    if np.linalg.norm(sum(ps) - total) > tol.tol_op:
        raise ValidationError("projectors do not sum to the required projector")
    return ps


def lueders_state(rho, projectors, tol: Tolerances | None = None) -> np.ndarray:
    """Post-measurement state ``sum_k P_k rho P_k``."""
    tol = resolve(tol)
    m = _density(rho, tol)
    ps = _check_resolution(projectors, m.shape[0], tol)
    return sum(p @ m @ p for p in ps)


def selective_lueders(rho, projector, tol: Tolerances | None = None) -> tuple[np.ndarray, float]:
    tol = resolve(tol)
    m = _density(rho, tol)
    p = as_matrix(projector)
    check_projector(p, tol)
    weight = float(np.real(np.trace(p @ m)))
    if weight <= tol.eps_rank:
        raise ValidationError("selected branch has zero weight")
    return p @ m @ p / weight, weight


# -- stage five --------------------------------------------------------------


@dataclass(frozen=True)
class IsolatedStep:
    n: int
    value: float
    deviation: float
    hs_residual: float
    purification_residual: float


@dataclass(frozen=True, eq=False)
class IsolatedLimit:
    steps: tuple[IsolatedStep, ...]
    limit: ProbabilityReport
    constants: tuple[float, ...]

    @property
    def constant(self) -> float:
        return float(np.mean(self.constants))

    def rows(self) -> list[dict]:
        return [
            {"n": s.n, "value": s.value, "deviation": s.deviation, "n_times_deviation": c,
             "hs_residual": s.hs_residual, "purification_residual": s.purification_residual}
            for s, c in zip(self.steps, self.constants)
        ]


def _default_grid(n_max: int) -> list[int]:
    grid, n = [], 10
    while n <= n_max:
        grid.append(n)
        n *= 10
    if not grid or grid[-1] != n_max:
        grid.append(n_max)
    return sorted(set(max(2, g) for g in grid))


def isolated_state_limit(psi, n_max: int, phi=None, complement=None, ns=None,
                         tol: Tolerances | None = None) -> IsolatedLimit:
    """Treat a pure isolated state as the limit of correlated subsystem states.

    ``rho^n = (1 - 1/n)|psi><psi| + (1/n) sigma`` with ``sigma`` a density on
    the orthocomplement of ``psi`` (default: maximally mixed there). Each
    ``rho^n`` is realized as the reduced state of an explicit purification;
    ``<phi|rho^n|phi>`` is read off that reduced state.
    """
    tol = resolve(tol)
    if n_max < 2:
        raise ValueError("n_max must be at least 2")
    psi = np.asarray(psi, dtype=complex)
    d = psi.size
    psi = _unit(psi, d, tol)
    if d < 2:
        raise DimensionError("a one-dimensional space has no orthocomplement")
    phi = psi if phi is None else _unit(phi, d, tol)
    pure = np.outer(psi, psi.conj())
    perp = np.eye(d) - pure
    if complement is None:
        sigma = perp / (d - 1)
    else:
        sigma = perp @ _density(complement, tol) @ perp
        tr = np.real(np.trace(sigma))
        if tr <= tol.eps_rank:
            raise ValidationError("complement state has no weight off psi")
        sigma /= tr
    exact = float(abs(np.vdot(phi, psi)) ** 2)
    grid = _default_grid(n_max) if ns is None else sorted(set(int(n) for n in ns))
    steps, consts = [], []
    for n in grid:
        rho_n = (1 - 1 / n) * pure + sigma / n
        w, v = np.linalg.eigh(rho_n)
        coeffs = v * np.sqrt(np.clip(w, 0, None))
        purified = BipartiteState.normalized(coeffs.reshape(-1), d, d)
        reduced = reduced_density(purified, 1, tol).matrix
        value = float(np.real(np.vdot(phi, reduced @ phi)))
        steps.append(IsolatedStep(
            n=n, value=value, deviation=value - exact,
            hs_residual=hs_distance(rho_n, pure),
            purification_residual=hs_distance(reduced, rho_n),
        ))
        consts.append(n * abs(value - exact))
    limit = ProbabilityReport(
        event={"kind": "vector", "vector": phi},
        value=_clamped(exact, tol.tol_op), route="eq-22",
        residuals={"final_deviation": abs(steps[-1].deviation)},
    )
    return IsolatedLimit(tuple(steps), limit, tuple(consts))


# -- the rule itself ---------------------------------------------------------


def born_probability(rho, event, isolated: bool = False, tol: Tolerances | None = None) -> ProbabilityReport:
    """Probability of a vector event ``<phi|rho|phi>`` or projector event ``tr(rho E)``.

    The route tag records which construction covers the case: eigenvectors
    of ``rho`` (``eq-16``), other vectors of a correlated subsystem
    (``eq-19``), vectors in an isolated state (``eq-23``), projectors
    (``trace-rule``).
    """
    tol = resolve(tol)
    m = _density(rho, tol)
    e = np.asarray(event, dtype=complex)
    if e.ndim == 1:
        v = _unit(e, m.shape[0], tol)
        mv = m @ v
        value = float(np.real(np.vdot(v, mv)))
        eig_res = float(np.linalg.norm(mv - value * v))
        if eig_res < tol.tol_op:
            route = "eq-16"
        else:
            route = "eq-23" if isolated else "eq-19"
        return ProbabilityReport({"kind": "vector", "vector": v}, _clamped(value, tol.tol_op),
                                 route, {"eigen": eig_res})
    if e.ndim == 2:
        if e.shape != m.shape:
            raise DimensionError("projector event has the wrong dimension")
        err = check_projector(e, tol)
        value = float(np.real(np.trace(m @ e)))
        return ProbabilityReport({"kind": "projector", "rank": int(round(np.real(np.trace(e))))},
                                 _clamped(value, tol.tol_op), "trace-rule", {"projector": err})
    raise ValidationError("event must be a vector or a projector")


def mixture_probability(weights, states, phi) -> float:
    """``sum_k w_k |<phi|psi_k>|^2`` for an ensemble decomposition."""
    phi = np.asarray(phi, dtype=complex)
    return float(sum(w * abs(np.vdot(phi, np.asarray(s, dtype=complex))) ** 2
                     for w, s in zip(weights, states)))


@dataclass(frozen=True)
class AdditivityResult:
    lhs: float
    rhs: float
    residual: float
    bridge_residual: float


def additivity_check(rho, g, decomposition, tol: Tolerances | None = None) -> AdditivityResult:
    """Compare ``tr(rho G)`` with ``sum_i tr(rho E_i)`` for an orthogonal split of ``G``.

    The bridge residual compares ``tr(rho G)`` with ``sum_i <i|rho|i>`` over
    an orthonormal basis of the range of ``G``.
    """
    tol = resolve(tol)
    m = _density(rho, tol)
    g = as_matrix(g)
    check_projector(g, tol)
    ps = _check_resolution(decomposition, m.shape[0], tol, target=g)
    lhs = float(np.real(np.trace(m @ g)))
    rhs = float(sum(np.real(np.trace(m @ p)) for p in ps))
    w, v = np.linalg.eigh((g + g.conj().T) / 2)
    basis = v[:, w > 0.5]
    bridge = float(sum(np.real(np.vdot(basis[:, i], m @ basis[:, i])) for i in range(basis.shape[1])))
    return AdditivityResult(lhs, rhs, abs(lhs - rhs), abs(lhs - bridge))


def additivity_induction(rho, decomposition, tol: Tolerances | None = None) -> list[float]:
    """Replay the finite induction: ``p(E_1+...+E_n) = p(E_1+...+E_{n-1}) + p(E_n)``.

    Returns the residual of each step ``n = 2, 3, ...``.
    """
    tol = resolve(tol)
    m = _density(rho, tol)
    ps = [as_matrix(p) for p in decomposition]
    partial = ps[0]
    _check_resolution(ps, m.shape[0], tol, target=sum(ps))
    out = []
    for p in ps[1:]:
        prev = float(np.real(np.trace(m @ partial)))
        partial = partial + p
        now = float(np.real(np.trace(m @ partial)))
        out.append(abs(now - prev - float(np.real(np.trace(m @ p)))))
    return out


# -- full pipeline -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PipelineResult:
    spectrum: RationalSpectrum
    finegrain: FinegrainUnitary
    counting: CountingResult
    direct: tuple[ProbabilityReport, ...]
    max_discrepancy: float


def pipeline(psi: BipartiteState, max_denominator: int = 1000, tol: Tolerances | None = None) -> PipelineResult:
    """Stages one and two end to end, compared with the direct rule on eigenvectors."""
    tol = resolve(tol)
    rho1 = reduced_density(psi, 1, tol)
    spec = rational_spectrum(rho1, max_denominator, tol)
    fg = finegrain_unitary(psi, spec, tol=tol)
    counting = counting_probabilities(fg.state, tol)
    direct = tuple(born_probability(rho1, rep.event["vector"], tol=tol) for rep in counting.vectors)
    gap = max(abs(a.value - b.value) for a, b in zip(counting.vectors, direct))
    return PipelineResult(spec, fg, counting, direct, gap)
