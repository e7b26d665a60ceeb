"""Numerical tolerances shared by every module.

All thresholds live in one immutable record so callers can override any of
them per call (``tol=Tolerances(tol_twin=1e-11)``) without global state.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

ENV_VAR = "ENVKIT_DEFAULT_TOL"


@dataclass(frozen=True)
class Tolerances:
    tol_norm: float = 1e-10
    tol_op: float = 1e-10
    tol_psd: float = 1e-10
    tol_recon: float = 1e-9
    eps_cluster: float = 1e-8
    eps_rank: float = 1e-10
    tol_unique: float = 1e-8
    tol_twin: float = 1e-9
    tol_commute: float = 1e-9
    tol_oracle: float = 1e-6
    tol_exact: float = 1e-12

    def override(self, **values: float) -> "Tolerances":
        unknown = set(values) - {f.name for f in dataclasses.fields(self)}
        if unknown:
            raise KeyError(f"unknown tolerance(s): {', '.join(sorted(unknown))}")
        return dataclasses.replace(self, **{k: float(v) for k, v in values.items()})

    def as_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)


DEFAULT = Tolerances()


def parse_overrides(items) -> dict[str, float]:
    """Parse ``name=value`` strings (or one comma-separated string)."""
    if isinstance(items, str):
        items = [s for s in items.split(",") if s.strip()]
    out = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"tolerance override must look like name=value, got {item!r}")
        out[name.strip()] = float(value)
    return out


def from_env(base: Tolerances = DEFAULT, environ=None) -> Tolerances:
    environ = os.environ if environ is None else environ
    raw = environ.get(ENV_VAR, "").strip()
    if not raw:
        return base
    return base.override(**parse_overrides(raw))


def resolve(tol: Tolerances | None) -> Tolerances:
    return DEFAULT if tol is None else tol
