"""Command-line front end.

Exit codes: 0 success, 1 usage or domain error, 2 a verification report failed.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from pathlib import Path
from typing import List, Optional

from . import average as avg
from . import core
from .catalog import build_function, parse_floats, parse_grid
from .errors import AssumptionWarning, BregproxError
from .grid import Grid1D, SampledFunction, conjugate_at, legendre_transform, use_oracle
from .kernels import KERNEL_NAMES, kernel
from .reports import VerificationReport

DEFAULT_GRID = " -5 5 2001"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fmt(v: float) -> str:
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return repr(float(v) + 0.0)


def _emit(f: SampledFunction, args, at_values: Optional[List[float]] = None) -> None:
    if args.out:
        f.to_csv(args.out)
    if at_values:
        for v in at_values:
            print(_fmt(v))
    elif not args.out:
        sys.stdout.write(f.to_csv())


def _write_json(obj, out: Optional[str]) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


def _at(args) -> List[float]:
    return parse_floats(" ".join(args.at)) if args.at else []


# ---------------------------------------------------------------------------
# subcommands


def cmd_transform(args) -> int:
    grid = parse_grid(args.grid)
    f = build_function(args.f, grid)
    dual = parse_grid(args.dual_grid) if args.dual_grid else None
    conj = legendre_transform(f, dual)
    at = _at(args)
    _emit(conj, args, list(conjugate_at(f, at)) if at else [])
    return 0


def cmd_envelope(args) -> int:
    k = kernel(args.kernel)
    grid = parse_grid(args.grid)
    f = build_function(args.f, grid)
    at = _at(args)
    if args.method == "conjugate":
        if args.side != "left":
            raise UsageError("the conjugate method computes the left envelope only")
        if at:
            env = core.envelope_via_conjugate(f, k, args.lam, grid=Grid1D.merged(grid, at))
            vals = [env(v) for v in at]
        else:
            env = core.envelope_via_conjugate(f, k, args.lam)
            vals = []
    else:
        env = core.envelope(f, k, args.lam, side=args.side)
        vals = list(core.envelope_at(f, k, args.lam, at, side=args.side)) if at else []
    _emit(env, args, vals)
    return 0


def cmd_prox(args) -> int:
    k = kernel(args.kernel)
    f = build_function(args.f, parse_grid(args.grid))
    at = _at(args)
    if not at:
        raise UsageError("prox needs --at")
    sets = [core.prox(f, k, args.lam, y).to_dict() for y in at]
    _write_json(sets if len(sets) > 1 else sets[0], args.out)
    return 0


def cmd_hull(args) -> int:
    k = kernel(args.kernel)
    f = build_function(args.f, parse_grid(args.grid))
    hull = core.prox_hull(f, k, args.lam)
    _emit(hull, args, [hull(v) for v in _at(args)])
    return 0


def _spec_from(args, grid: Grid1D) -> avg.AverageSpec:
    k = kernel(args.kernel)
    f1 = build_function(args.f1, grid)
    f2 = build_function(args.f2, grid)
    return avg.AverageSpec(f1, f2, args.alpha, args.lam, k)


def cmd_average(args) -> int:
    spec = _spec_from(args, parse_grid(args.grid))
    P = avg.proximal_average(spec, method=args.method)
    _emit(P, args, [P(v) for v in _at(args)])
    return 0


def cmd_project(args) -> int:
    k = kernel(args.kernel)
    C = build_function(args.set, parse_grid(args.grid))
    at = _at(args)
    if not at:
        raise UsageError("project needs --at")
    sets = []
    for y in at:
        ps = core.bregman_project(C, k, args.lam, y)
        d = ps.to_dict()
        d["distance"] = ps.min_value * args.lam
        sets.append(d)
    _write_json(sets if len(sets) > 1 else sets[0], args.out)
    return 0


def cmd_threshold(args) -> int:
    k = kernel(args.kernel)
    f = build_function(args.f, parse_grid(args.grid))
    _write_json(core.prox_bound_threshold(f, k).to_dict(), args.out)
    return 0


def _finish(reports: List[VerificationReport], out: Optional[str]) -> int:
    for r in reports:
        print(r)
    if out:
        Path(out).write_text(json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n")
    return 0 if all(r.passed for r in reports) else 2


def cmd_sweep(args) -> int:
    grid = parse_grid(args.grid)
    spec = _spec_from(args, grid)
    result = avg.sweep(spec, parse_floats(args.alphas), parse_floats(args.lambdas), workers=args.workers)
    out_dir = args.out or "sweep_out"
    result.write(out_dir)
    for r in result.reports:
        print(r)
    return 0 if result.passed else 2


def cmd_verify(args) -> int:
    from .verification import run_suite

    reports = run_suite(args.suite, args.kernel, seed=args.seed)
    return _finish(reports, args.out)


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="bregprox", description="Bregman envelopes, proximal maps and proximal averages on grids.")
    p.add_argument("--oracle", action="store_true", help="route computations through the brute-force oracles")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, needs_kernel=True, lam=True):
        if needs_kernel:
            sp.add_argument("--kernel", required=True, choices=KERNEL_NAMES)
        if lam:
            sp.add_argument("--lambda", dest="lam", type=float, default=1.0)
        sp.add_argument("--grid", default=DEFAULT_GRID, help="uniform grid 'lo hi n'")
        sp.add_argument("--out", default=None)
        sp.add_argument("--at", nargs="+", default=None, help="evaluation points")
        sp.add_argument("--oracle", action="store_true", default=argparse.SUPPRESS)

    sp = sub.add_parser("transform", help="discrete Legendre-Fenchel transform")
    common(sp, needs_kernel=False, lam=False)
    sp.add_argument("--f", required=True)
    sp.add_argument("--dual-grid", default=None)
    sp.set_defaults(func=cmd_transform)

    sp = sub.add_parser("envelope", help="Bregman envelope")
    common(sp)
    sp.add_argument("--f", required=True)
    sp.add_argument("--side", choices=("left", "right"), default="left")
    sp.add_argument("--method", choices=("direct", "conjugate"), default="direct")
    sp.set_defaults(func=cmd_envelope)

    sp = sub.add_parser("prox", help="Bregman proximal set")
    common(sp)
    sp.add_argument("--f", required=True)
    sp.set_defaults(func=cmd_prox)

    sp = sub.add_parser("hull", help="proximal hull")
    common(sp)
    sp.add_argument("--f", required=True)
    sp.set_defaults(func=cmd_hull)

    for name, fn, hlp in (("average", cmd_average, "proximal average"), ("sweep", cmd_sweep, "alpha/lambda sweep")):
        sp = sub.add_parser(name, help=hlp)
        common(sp)
        sp.add_argument("--f1", required=True)
        sp.add_argument("--f2", required=True)
        if name == "average":
            sp.add_argument("--alpha", type=float, required=True)
            sp.add_argument("--method", choices=("conjugate", "scaled"), default="conjugate")
        else:
            sp.add_argument("--alpha", type=float, default=0.5)
            sp.add_argument("--alphas", default="0.5")
            sp.add_argument("--lambdas", default="0.01 0.1 1 10")
            sp.add_argument("--workers", type=int, default=1)
        sp.set_defaults(func=fn)

    sp = sub.add_parser("project", help="Bregman projection onto a set")
    common(sp)
    sp.add_argument("--set", required=True)
    sp.set_defaults(func=cmd_project)

    sp = sub.add_parser("threshold", help="prox-bound threshold")
    common(sp, lam=False)
    sp.add_argument("--f", required=True)
    sp.set_defaults(func=cmd_threshold)

    sp = sub.add_parser("verify", help="run the verification suite")
    sp.add_argument("--suite", default="all", choices=("all", "kernels", "grid", "core", "average"))
    sp.add_argument("--kernel", default="energy", choices=KERNEL_NAMES)
    sp.add_argument("--seed", type=int, default=None, help="defaults to $BREGMAN_SEED or 42")
    sp.add_argument("--out", default=None)
    sp.add_argument("--oracle", action="store_true", default=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            raise UsageError("a subcommand is required")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", AssumptionWarning)
            with use_oracle(bool(getattr(args, "oracle", False))):
                return args.func(args)
    except UsageError as exc:
        print(f"bregprox: error: {exc}", file=sys.stderr)
        return 1
    except (BregproxError, ValueError, OSError) as exc:
        print(f"bregprox: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
