"""Command line entry point.

Exit codes: 0 when every check passes, 2 on any certification failure,
3 on unusable input.
"""

from __future__ import annotations

import argparse
import sys

from . import tolerances
from .scenarios import (
    EXIT_INPUT,
    InputError,
    Scenario,
    exit_code,
    run,
    write_report,
)


def _common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=None, help="RNG seed (default 0)")
    p.add_argument("--tol", action="append", default=[], metavar="NAME=VALUE",
                   help="override a tolerance; repeatable")
    p.add_argument("--out", default=None, help="write the JSON report here instead of stdout")
    p.add_argument("--scenario", default=None, help="scenario JSON used as the base configuration")
    g = p.add_argument_group("state")
    g.add_argument("--state", default=None, help="bipartite state JSON file")
    g.add_argument("--d1", type=int, default=None)
    g.add_argument("--d2", type=int, default=None)
    g.add_argument("--rank", type=int, default=None)
    g.add_argument("--spectrum", default=None,
                   help="comma-separated Schmidt spectrum, fractions allowed (e.g. 2/3,1/3)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="envkit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("schmidt", help="Schmidt decomposition and correlation operator checks")
    _common(p)
    p.add_argument("--trials", type=int, default=None)

    twin = sub.add_parser("twin", help="twin unitaries").add_subparsers(dest="mode", required=True)
    p = twin.add_parser("verify", help="check a given pair")
    _common(p)
    p.add_argument("--u1", required=True)
    p.add_argument("--u2", required=True)
    p.add_argument("--allow-phase", action="store_true")
    p = twin.add_parser("sample", help="sample and certify random twin pairs")
    _common(p)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--include-pairs", action="store_true")
    p = twin.add_parser("of", help="construct the twin of a first-factor unitary")
    _common(p)
    p.add_argument("--u1", required=True)

    p = sub.add_parser("group", help="group axioms of twin pairs")
    _common(p)
    p.add_argument("--count", type=int, default=None)

    born = sub.add_parser("born", help="probability-rule stages").add_subparsers(dest="mode", required=True)
    p = born.add_parser("pipeline", help="fine-graining and counting")
    _common(p)
    p.add_argument("--max-denominator", type=int, default=None)
    p = born.add_parser("closest", help="closest eigenstate density vs random oracle")
    _common(p)
    p.add_argument("--phi", default=None, help="event vector JSON file")
    p.add_argument("--rho", default=None, help="density matrix JSON file (default: rho1 of the state)")
    p.add_argument("--samples", type=int, default=None)
    p = born.add_parser("continuity", help="approximating sequences")
    _common(p)
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--csv", default=None, help="also write the convergence table as CSV")
    p = born.add_parser("isolated", help="isolated pure state as a limit")
    _common(p)
    p.add_argument("--n-max", type=int, default=None)
    p.add_argument("--psi", default=None, help="vector JSON file")
    p.add_argument("--phi", default=None, help="vector JSON file")
    p.add_argument("--csv", default=None)

    p = sub.add_parser("report", help="run a scenario file")
    _common(p)
    return parser


_KIND = {
    ("schmidt", None): "schmidt",
    ("twin", "verify"): "twins",
    ("twin", "sample"): "twins",
    ("twin", "of"): "twins",
    ("group", None): "group",
    ("born", "pipeline"): "born-pipeline",
    ("born", "closest"): "closest-state",
    ("born", "continuity"): "continuity",
    ("born", "isolated"): "isolated",
}

_PARAMS = ("trials", "u1", "u2", "allow_phase", "count", "include_pairs", "max_denominator",
           "phi", "rho", "samples", "n_max", "csv", "psi")


def scenario_from_args(args) -> Scenario:
    if args.scenario:
        sc = Scenario.load(args.scenario)
    elif args.command == "report":
        raise InputError("report needs --scenario")
    else:
        sc = Scenario(kind="")
    mode = getattr(args, "mode", None)
    if args.command != "report":
        sc.kind = _KIND[(args.command, mode)]
        if args.command == "twin":
            sc.params["mode"] = mode
    if args.seed is not None:
        sc.seed = args.seed
    try:
        sc.tolerances.update(tolerances.parse_overrides(args.tol))
    except ValueError as exc:
        raise InputError(str(exc)) from exc
    if args.state:
        sc.state = {"file": args.state}
    elif args.d1 is not None or args.d2 is not None:
        if args.d1 is None or args.d2 is None:
            raise InputError("--d1 and --d2 go together")
        rnd = {"d1": args.d1, "d2": args.d2}
        if args.rank is not None:
            rnd["rank"] = args.rank
        if args.spectrum:
            rnd["spectrum"] = [s.strip() for s in args.spectrum.split(",")]
        sc.state = {"random": rnd}
    for name in _PARAMS:
        value = getattr(args, name, None)
        if value not in (None, False):
            sc.params[name] = value
    if args.out:
        sc.output = args.out
    return sc


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        base = tolerances.from_env()
        sc = scenario_from_args(args)
        report = run(sc, base)
    except (InputError, KeyError, ValueError) as exc:
        print(f"envkit: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    text = write_report(report, sc.output)
    if not sc.output:
        print(text)
    for check in report["checks"]:
        if not check["passed"]:
            print(f"FAIL {check['name']} [{check['relation']}]: residual {check['residual']:.3g} "
                  f">= {check['tolerance']:.3g}", file=sys.stderr)
    return exit_code(report)


if __name__ == "__main__":
    sys.exit(main())
