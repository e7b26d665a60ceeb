"""JSON encodings.

Complex numbers are ``[re, im]`` pairs, vectors are arrays of pairs and
matrices arrays of rows. Decoders also accept bare real numbers.
"""

from __future__ import annotations

import hashlib
import json
from fractions import Fraction

import numpy as np

from .born import ProbabilityReport
from .hilbert import BipartiteState
from .schmidt import CorrelationOperator, SchmidtDecomposition
from .twins import TwinPair


def encode_complex(z) -> list[float]:
    z = complex(z)
    return [float(z.real), float(z.imag)]


def encode_array(a) -> list:
    a = np.asarray(a)
    if a.ndim == 0:
        return encode_complex(a)
    return [encode_array(x) for x in a]


def _decode_scalar(x) -> complex:
    if isinstance(x, (int, float)):
        return complex(x)
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(isinstance(t, (int, float)) for t in x):
        return complex(x[0], x[1])
    raise ValueError(f"cannot decode complex number from {x!r}")


def decode_vector(data) -> np.ndarray:
    return np.array([_decode_scalar(x) for x in data], dtype=complex)


def decode_matrix(data) -> np.ndarray:
    rows = [decode_vector(row) for row in data]
    if len({r.size for r in rows}) > 1:
        raise ValueError("ragged matrix")
    return np.array(rows, dtype=complex)


def state_to_json(psi: BipartiteState) -> dict:
    return {"d1": psi.d1, "d2": psi.d2, "amplitudes": encode_array(psi.amplitudes)}


def state_from_json(data: dict) -> BipartiteState:
    return BipartiteState(decode_vector(data["amplitudes"]), int(data["d1"]), int(data["d2"]))


def state_hash(psi: BipartiteState) -> str:
    canon = json.dumps(state_to_json(psi), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def schmidt_to_json(sd: SchmidtDecomposition) -> dict:
    return {
        "coefficients": [float(c) for c in sd.coefficients],
        "basis1": encode_array(sd.basis1),
        "basis2": encode_array(sd.basis2),
    }


def correlation_to_json(ua: CorrelationOperator) -> dict:
    return {"V": encode_array(ua.V), "Q1": encode_array(ua.Q1), "Q2": encode_array(ua.Q2)}


def twin_to_json(pair: TwinPair, psi: BipartiteState | None = None) -> dict:
    out = {"U1": encode_array(pair.U1), "U2": encode_array(pair.U2), "residual": pair.residual}
    if psi is not None:
        out["state_sha256"] = state_hash(psi)
    return out


def twin_from_json(data: dict) -> TwinPair:
    return TwinPair(decode_matrix(data["U1"]), decode_matrix(data["U2"]), float(data.get("residual", np.nan)))


def rational_to_json(f: Fraction) -> dict:
    return {"exact_rational": f"{f.numerator}/{f.denominator}", "rational": [f.numerator, f.denominator]}


def report_to_json(rep: ProbabilityReport) -> dict:
    event = {k: (encode_array(v) if isinstance(v, np.ndarray) else v) for k, v in rep.event.items()}
    out = {
        "event": event,
        "value": rep.value,
        "route": rep.route,
        "residuals": {k: float(v) for k, v in rep.residuals.items()},
    }
    if rep.exact is not None:
        out.update(rational_to_json(rep.exact))
    return out
