"""Scenario runner: seeded batch certification producing JSON reports."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import born, schmidt, twins
from .errors import EnvkitError
from .hilbert import BipartiteState, DensityOperator, haar_unitary, hs_distance, reduced_density
from .serialize import (
    correlation_to_json,
    decode_matrix,
    decode_vector,
    encode_array,
    rational_to_json,
    report_to_json,
    schmidt_to_json,
    state_from_json,
    state_hash,
    state_to_json,
    twin_to_json,
)
from .tolerances import DEFAULT, Tolerances

KINDS = ("schmidt", "twins", "group", "born-pipeline", "closest-state", "continuity", "isolated")

EXIT_OK = 0
EXIT_CERTIFICATION = 2
EXIT_INPUT = 3


class InputError(EnvkitError, ValueError):
    """Scenario or input state cannot be used."""


@dataclass
class Scenario:
    kind: str
    state: dict = field(default_factory=dict)
    seed: int = 0
    tolerances: dict = field(default_factory=dict)
    output: str | None = None
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        known = {"kind", "state", "seed", "tolerances", "output", "params"}
        extra = {k: v for k, v in data.items() if k not in known}
        params = dict(data.get("params", {}))
        params.update(extra)
        return cls(
            kind=data["kind"],
            state=dict(data.get("state", {})),
            seed=int(data.get("seed", 0)),
            tolerances=dict(data.get("tolerances", {})),
            output=data.get("output"),
            params=params,
        )

    @classmethod
    def load(cls, path) -> "Scenario":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError, KeyError) as exc:
            raise InputError(f"cannot read scenario {path}: {exc}") from exc


def _parse_spectrum(values) -> list[float]:
    out = []
    for v in values:
        out.append(float(Fraction(v)) if isinstance(v, str) else float(v))
    return out


def random_state(spec: dict, seed=None, rng: np.random.Generator | None = None,
                 tol: Tolerances | None = None) -> BipartiteState:
    """Random bipartite state with a prescribed or random Schmidt spectrum.

    ``spec`` holds ``d1``, ``d2`` and optionally ``rank`` or ``spectrum``
    (floats or fraction strings such as ``"2/3"``). Eigenbases and the
    correlation operator are Haar random.
    """
    rng = np.random.default_rng(seed) if rng is None else rng
    d1, d2 = int(spec["d1"]), int(spec["d2"])
    if d1 < 1 or d2 < 1:
        raise InputError("dimensions must be positive")
    if spec.get("spectrum") is not None:
        values = _parse_spectrum(spec["spectrum"])
        if spec.get("rank") is not None and int(spec["rank"]) != len(values):
            raise InputError("rank disagrees with the spectrum length")
        if any(v <= 0 for v in values):
            raise InputError("spectrum entries must be positive")
        if abs(sum(values) - 1.0) > 1e-9:
            raise InputError(f"spectrum sums to {sum(values)!r}, not 1")
        values = sorted(values, reverse=True)
    else:
        rank = int(spec.get("rank", min(d1, d2)))
        if rank < 1:
            raise InputError("rank must be positive")
        if rank > min(d1, d2):
            raise InputError(f"rank {rank} exceeds min(d1, d2) = {min(d1, d2)}")
        values = sorted(rng.dirichlet(np.ones(rank)), reverse=True)
    rank = len(values)
    if rank > min(d1, d2):
        raise InputError(f"rank {rank} exceeds min(d1, d2) = {min(d1, d2)}")
    r = np.asarray(values, dtype=float)
    r = r / r.sum()
    b = haar_unitary(d1, rng)[:, :rank]
    c = haar_unitary(d2, rng)[:, :rank]
    rho1 = (b * r) @ b.conj().T
    ua = schmidt.CorrelationOperator.from_bases(b, c)
    return schmidt.strong_schmidt_reconstruct(rho1, ua, tol)


def load_state(source: dict, rng: np.random.Generator, tol: Tolerances) -> BipartiteState:
    try:
        if "file" in source:
            return state_from_json(json.loads(Path(source["file"]).read_text()))
        if "inline" in source:
            return state_from_json(source["inline"])
        if "random" in source:
            return random_state(source["random"], rng=rng, tol=tol)
        if "d1" in source and "amplitudes" in source:
            return state_from_json(source)
        if "d1" in source:
            return random_state(source, rng=rng, tol=tol)
    except InputError:
        raise
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid input state: {exc}") from exc
    raise InputError("scenario has no usable state source")


def _load_matrix(value) -> np.ndarray:
    try:
        if isinstance(value, str):
            value = json.loads(Path(value).read_text())
        return decode_matrix(value)
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        raise InputError(f"invalid matrix input: {exc}") from exc


def _load_vector(value) -> np.ndarray:
    try:
        if isinstance(value, str):
            value = json.loads(Path(value).read_text())
        return decode_vector(value)
    except (OSError, json.JSONDecodeError, ValueError) as exc:
        raise InputError(f"invalid vector input: {exc}") from exc


def _random_unit(dim: int, rng: np.random.Generator) -> np.ndarray:
    return haar_unitary(dim, rng)[:, 0]


class _Checks:
    def __init__(self):
        self.items = []

    def add(self, name: str, relation: str, residual: float, tolerance: float, passed: bool | None = None):
        residual = float(residual)
        ok = residual < tolerance if passed is None else bool(passed)
        self.items.append({
            "name": name, "relation": relation, "passed": ok,
            "residual": residual, "tolerance": float(tolerance),
        })

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.items)


def _write_csv(path, rows: list[dict]):
    if not rows:
        return
    fields = []
    for row in rows:
        fields.extend(k for k in row if k not in fields)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)


# -- suites ------------------------------------------------------------------


def _suite_schmidt(sc, psi, rng, tol, checks):
    sd = schmidt.canonical_schmidt(psi, tol)
    ua = schmidt.correlation_operator(psi, tol, schmidt=sd)
    pic = schmidt.subsystem_picture(psi, tol)
    rho1 = reduced_density(psi, 1, tol)
    rec = np.linalg.norm(sd.reconstruct().amplitudes - psi.amplitudes)
    checks.add("reconstruction", "schmidt-form", rec, tol.tol_recon)
    checks.add("orthonormal basis1", "schmidt-form", np.linalg.norm(sd.basis1.conj().T @ sd.basis1 - np.eye(sd.rank)), tol.tol_op)
    checks.add("orthonormal basis2", "schmidt-form", np.linalg.norm(sd.basis2.conj().T @ sd.basis2 - np.eye(sd.rank)), tol.tol_op)
    eig = rho1.spectrum.eigenvalues[: sd.rank]
    checks.add("coefficients^2 = eigenvalues of rho1", "reduced-spectrum", np.max(np.abs(sd.eigenvalues - eig)), tol.tol_recon)
    checks.add("U_a isometric", "correlation-operator", ua.isometry_residual(), tol.tol_op)
    checks.add("rho2 = U_a rho1 U_a^-1", "correlated-subsystems", pic.twin_residual, tol.tol_op)
    trials = int(sc.params.get("trials", 20))
    dev = schmidt.uniqueness_certificate(psi, trials, rng, tol)
    checks.add("U_a independent of eigen-sub-basis", "correlation-uniqueness", dev, tol.tol_unique)
    back = schmidt.strong_schmidt_reconstruct(rho1, ua, tol)
    checks.add("strong Schmidt round trip", "strong-schmidt", np.linalg.norm(back.amplitudes - psi.amplitudes), tol.tol_recon)
    return {
        "schmidt": schmidt_to_json(sd),
        "correlation_operator": correlation_to_json(ua),
        "eigenvalues": [float(v) for v in pic.values],
        "multiplicities": list(pic.multiplicities),
        "uniqueness_deviation": dev,
    }


def _suite_twins(sc, psi, rng, tol, checks):
    mode = sc.params.get("mode", "sample")
    pic = schmidt.subsystem_picture(psi, tol)
    if mode == "verify":
        u1 = _load_matrix(sc.params["u1"])
        u2 = _load_matrix(sc.params["u2"])
        res = twins.is_twin_pair(u1, u2, psi, allow_phase=bool(sc.params.get("allow_phase", False)), tol=tol)
        checks.add("act equally", "act-equally" if not sc.params.get("allow_phase") else "act-equally-up-to-phase", res.residual, tol.tol_twin)
        return {"twin": res.ok, "residual": res.residual, "phase": res.phase}
    if mode == "of":
        u1 = _load_matrix(sc.params["u1"])
        u2 = twins.twin_of(u1, pic, tol)
        pair = twins.certify(u1, u2, psi, tol)
        checks.add("twin of U1 certified", "twin-construction", pair.residual, tol.tol_twin)
        return {"pair": twin_to_json(pair, psi)}
    if mode != "sample":
        raise InputError(f"unknown twins mode {mode!r}")
    count = int(sc.params.get("count", 100))
    residuals, commutators = [], []
    for _ in range(count):
        pair = twins.sample_twin(pic, rng, tol)
        residuals.append(pair.residual)
        commutators.append(max(np.linalg.norm(pair.U1 @ pic.rho1 - pic.rho1 @ pair.U1),
                               np.linalg.norm(pair.U2 @ pic.rho2 - pic.rho2 @ pair.U2)))
    checks.add("sampled pairs act equally", "block-twins", max(residuals), tol.tol_twin)
    checks.add("sampled pairs commute with rho_s", "symmetry-of-rho", max(commutators), tol.tol_commute)
    out = {"count": count, "max_residual": max(residuals), "max_commutator": max(commutators)}
    if sc.params.get("include_pairs"):
        out["pairs"] = [twin_to_json(twins.sample_twin(pic, rng, tol), psi) for _ in range(count)]
    return out


def _pair_distance(a, b):
    return max(np.linalg.norm(a.U1 - b.U1), np.linalg.norm(a.U2 - b.U2))


def _suite_group(sc, psi, rng, tol, checks):
    pic = schmidt.subsystem_picture(psi, tol)
    count = int(sc.params.get("count", 100))
    e = twins.identity_pair(psi)
    table = {"closure": 0.0, "identity": 0.0, "inverse": 0.0, "associativity": 0.0}
    for _ in range(count):
        p, q, r = (twins.sample_twin(pic, rng, tol) for _ in range(3))
        pq = twins.compose(p, q, psi, tol)
        table["closure"] = max(table["closure"], pq.residual)
        table["identity"] = max(table["identity"], _pair_distance(twins.compose(e, q, psi, tol), q),
                                _pair_distance(twins.compose(q, e, psi, tol), q))
        table["inverse"] = max(table["inverse"], _pair_distance(twins.compose(p, twins.inverse(p, psi, tol), psi, tol), e),
                               _pair_distance(twins.compose(twins.inverse(p, psi, tol), p, psi, tol), e))
        left = twins.compose(pq, r, psi, tol)
        right = twins.compose(p, twins.compose(q, r, psi, tol), psi, tol)
        table["associativity"] = max(table["associativity"], _pair_distance(left, right))
    for name, value in table.items():
        checks.add(f"group {name}", "twin-group", value, tol.tol_twin)
    return {"count": count, "residuals": table}


def _suite_pipeline(sc, psi, rng, tol, checks):
    max_den = int(sc.params.get("max_denominator", 1000))
    rho1 = reduced_density(psi, 1, tol)
    spec = born.rational_spectrum(rho1, max_den, tol)
    result = {
        "spectrum": {
            "numerators": list(spec.numerators), "denominator": spec.denominator,
            "multiplicities": list(spec.multiplicities), "exact": spec.exact, "error": spec.error,
        }
    }
    checks.add("sum_j d_j m_j = M", "rational-spectrum", 0.0, 1.0,
               passed=sum(d * m for d, m in zip(spec.multiplicities, spec.numerators)) == spec.denominator)
    if not spec.exact:
        checks.add("rational spectrum exact", "rational-spectrum", spec.error, tol.tol_exact)
        return result
    res = born.pipeline(psi, max_den, tol)
    fg, counting = res.finegrain, res.counting
    checks.add("U23 unitary", "finegrain-map", fg.unitarity_residual, tol.tol_op * fg.U23.shape[0])
    checks.add("(1 x U23)(psi x phi0) = Phi", "finegrain-map", fg.state_residual, tol.tol_recon)
    checks.add("rho1 unchanged by U23", "local-invariance", fg.rho1_residual, tol.tol_recon)
    checks.add("(1+2)+3 coefficients = M^-1/2", "equal-branches", counting.coefficient_residual, tol.tol_op)
    checks.add("counting = d_j m_j / M", "counting", 0.0, 1.0, passed=all(
        rep.exact == Fraction(d * m, spec.denominator)
        for rep, d, m in zip(counting.blocks, spec.multiplicities, spec.numerators)))
    checks.add("counting agrees with <phi|rho1|phi>", "eigenvector-rule", res.max_discrepancy, tol.tol_op)
    result.update({
        "blocks": [report_to_json(r) for r in counting.blocks],
        "vectors": [report_to_json(r) for r in counting.vectors],
        "direct": [report_to_json(r) for r in res.direct],
        "max_discrepancy": res.max_discrepancy,
    })
    return result


def _suite_closest(sc, psi, rng, tol, checks):
    rho = reduced_density(psi, 1, tol).matrix if "rho" not in sc.params else _load_matrix(sc.params["rho"])
    d = rho.shape[0]
    phi = _load_vector(sc.params["phi"]) if "phi" in sc.params else _random_unit(d, rng)
    samples = int(sc.params.get("samples", 100_000))
    rho_p, r = born.closest_eigenstate_density(rho, phi, tol)
    closed = hs_distance(rho, rho_p)
    oracle, _ = born.closest_oracle(rho, phi, samples, rng, tol)
    checks.add("closed form not beaten by oracle", "closest-density", max(0.0, closed - oracle), tol.tol_oracle)
    checks.add("phi eigenvector of rho'", "eigenstate-family", np.linalg.norm(rho_p @ phi - r * phi), tol.tol_op)
    direct = born.born_probability(rho, phi, tol=tol)
    checks.add("r' = <phi|rho|phi>", "vector-rule", abs(direct.value - r), tol.tol_exact)
    return {"rho_prime": encode_array(rho_p), "r_prime": r, "closed_distance": closed,
            "oracle_distance": oracle, "samples": samples}


def _suite_continuity(sc, psi, rng, tol, checks):
    rho = reduced_density(psi, 1, tol)
    n_max = int(sc.params.get("n_max", 6))
    seq = born.continuity_sequence(rho, n_max, tol)
    checks.add("HS residuals nonincreasing", "continuity", 0.0, 1.0, passed=seq.monotone)
    last = seq.rational[-1]
    slack = sum(seq.multiplicities) * max(seq.multiplicities) / last.bound
    checks.add("rational sequence reaches rho1", "continuity", last.hs_residual, slack)
    if seq.truncation:
        checks.add("truncated sequence reaches rho1", "continuity", seq.truncation[-1].hs_residual
                   if len(seq.truncation) == len(seq.values) else 0.0, tol.tol_recon)
    rows = seq.rows()
    if sc.params.get("csv"):
        _write_csv(sc.params["csv"], rows)
    return {"values": list(seq.values), "multiplicities": list(seq.multiplicities), "table": rows}


def _suite_isolated(sc, psi, rng, tol, checks):
    d = psi.d1
    vec = _load_vector(sc.params["psi"]) if "psi" in sc.params else _random_unit(max(d, 2), rng)
    phi = _load_vector(sc.params["phi"]) if "phi" in sc.params else _random_unit(vec.size, rng)
    n_max = int(sc.params.get("n_max", 10**6))
    lim = born.isolated_state_limit(vec, n_max, phi=phi, tol=tol)
    hs = [s.hs_residual for s in lim.steps]
    checks.add("HS residuals nonincreasing", "isolated-convergence", 0.0, 1.0, passed=born._nonincreasing(hs))
    checks.add("purifications reproduce rho^n", "purification", max(s.purification_residual for s in lim.steps), tol.tol_recon)
    spread = (max(lim.constants) - min(lim.constants)) / max(max(lim.constants), 1e-300)
    checks.add("deviation = C/n with constant C", "isolated-rate", spread, 1e-6)
    checks.add("limit equals |<phi|psi>|^2", "isolated-limit", abs(lim.steps[-1].deviation), max(2.0 / lim.steps[-1].n, 1e-12))
    rows = lim.rows()
    if sc.params.get("csv"):
        _write_csv(sc.params["csv"], rows)
    return {"limit": report_to_json(lim.limit), "constant": lim.constant, "table": rows}


_SUITES = {
    "schmidt": _suite_schmidt,
    "twins": _suite_twins,
    "group": _suite_group,
    "born-pipeline": _suite_pipeline,
    "closest-state": _suite_closest,
    "continuity": _suite_continuity,
    "isolated": _suite_isolated,
}


def run(scenario: Scenario, base_tol: Tolerances = DEFAULT) -> dict:
    """Run one scenario and return its report document.

    Raises :class:`InputError` for unusable input; certification failures
    are recorded in the report (``passed`` false) rather than raised.
    """
    if scenario.kind not in _SUITES:
        raise InputError(f"unknown scenario kind {scenario.kind!r}; expected one of {', '.join(KINDS)}")
    try:
        tol = base_tol.override(**scenario.tolerances)
    except (KeyError, ValueError) as exc:
        raise InputError(str(exc)) from exc
    rng = np.random.default_rng(scenario.seed)
    psi = load_state(scenario.state or {"random": {"d1": 2, "d2": 2}}, rng, tol)
    checks = _Checks()
    error = None
    try:
        results = _SUITES[scenario.kind](scenario, psi, rng, tol, checks)
    except (InputError, KeyError) as exc:
        raise InputError(f"bad scenario parameters: {exc}") from exc
    except EnvkitError as exc:
        results, error = {}, f"{type(exc).__name__}: {exc}"
        checks.add("suite completed", "suite", 0.0, 1.0, passed=False)
    report = {
        "kind": scenario.kind,
        "seed": scenario.seed,
        "state_sha256": state_hash(psi),
        "state": state_to_json(psi),
        "tolerances": tol.as_dict(),
        "checks": checks.items,
        "results": results,
        "passed": checks.passed,
    }
    if error:
        report["error"] = error
    return report


def write_report(report: dict, path=None) -> str:
    text = json.dumps(report, indent=2, sort_keys=False)
    if path:
        Path(path).write_text(text + "\n")
    return text


def exit_code(report: dict) -> int:
    return EXIT_OK if report["passed"] else EXIT_CERTIFICATION
