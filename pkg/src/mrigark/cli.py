"""Command-line entry point: ``mrigark <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from typing import List, Optional, Sequence

import numpy as np

from . import harness
from .integrators import InnerSolverConfig, NewtonConfig, integrate
from .methods import BASE_TABLEAUS, UnknownMethodError, available_methods, registry_lookup
from .problems import make_problem
from .stability import StabilityQuery, scan_region
from .tableaux import load_scheme, scheme_to_dict
from .verify import all_required_pass, verify_scheme

__all__ = ["main", "build_parser"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}")


def _floats(text: str, n: Optional[int] = None) -> List[float]:
    try:
        vals = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if n is not None and len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated numbers, got {text!r}")
    return vals


def _ints(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _names(text: str) -> List[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def _rho(text: str) -> float:
    if text.lower() in ("inf", "infinity"):
        return math.inf
    return float(text)


def _add_inner(p: argparse.ArgumentParser) -> None:
    p.add_argument("--inner-mode", choices=["adaptive", "fixed", "implicit"], default="adaptive")
    p.add_argument("--inner-tol", type=float, default=1e-10, help="inner abs/rel tolerance (adaptive mode)")
    p.add_argument("--substeps", type=int, default=10, help="inner substeps (fixed and implicit modes)")
    p.add_argument("--inner-method", default="ESDIRK4(3)6", help="base tableau for the implicit inner mode")
    p.add_argument("--newton-tol", type=float, default=1e-12)


def _add_problem(p: argparse.ArgumentParser) -> None:
    p.add_argument("--problem", required=True, help="gray-scott, kpr or inverter-chain")
    p.add_argument("--config", help="JSON object or path to a JSON file with problem config overrides")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mrigark", description="Multirate GARK integrators, verification and stability tools.")
    parser.add_argument("--seed", type=int, default=0, help="seed for any randomized sampling")
    parser.add_argument("--out", help="write results here instead of stdout")
    parser.add_argument("--json", action="store_true", help="JSON output instead of CSV")
    # the same options after the subcommand; SUPPRESS keeps the global values otherwise
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS)
    common.add_argument("--json", action="store_true", default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, **kw):
        return sub.add_parser(name, parents=[common], **kw)

    p = add("verify", help="check consistency and order-condition residuals")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--method", action="append", help="registered method name (repeatable)")
    g.add_argument("--all", action="store_true", help="every registered method (the default)")
    g.add_argument("--file", help="JSON file with a scheme")
    p.add_argument("--tol", type=float, help="override the residual tolerance")

    p = add("integrate", help="fixed-step integration of a benchmark problem")
    p.add_argument("--method", required=True, help="registered method or base tableau name")
    _add_problem(p)
    p.add_argument("--H", type=float, required=True, help="macro step size")
    _add_inner(p)

    p = add("converge", help="error against H for a sequence of step counts")
    p.add_argument("--method", required=True)
    _add_problem(p)
    p.add_argument("--steps", type=_ints, required=True, help="comma-separated, strictly increasing")
    p.add_argument("--norm", choices=["l2", "linf"], default="l2")
    _add_inner(p)

    p = add("stability", help="scan a stability region")
    p.add_argument("--method", required=True)
    p.add_argument("--kind", choices=["scalar", "matrix"], default="scalar")
    p.add_argument("--rho", type=_rho, default=math.inf)
    p.add_argument("--alpha", type=float, default=90.0, help="sector half-angle in degrees")
    p.add_argument("--window", type=lambda s: _floats(s, 4), default=[-10.0, 0.0, -10.0, 10.0])
    p.add_argument("--res", type=int, default=41)
    p.add_argument("--xi", type=float, default=0.1)
    p.add_argument("--coupling-alpha", type=float, default=1.0)
    p.add_argument("--literal-matrix", action="store_true", help="evaluate M(Z(zf, zf)) in matrix scans")

    p = add("work-precision", help="error and wall time for several schemes and step sizes")
    p.add_argument("--methods", type=_names, required=True, help="comma-separated scheme names")
    _add_problem(p)
    p.add_argument("--H", type=_floats, required=True, help="comma-separated step sizes")
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--baseline", help="report matched-error speedups against this scheme")
    _add_inner(p)

    p = add("export-methods", help="dump registered schemes as JSON")
    p.add_argument("--method", action="append", help="only these methods (repeatable)")
    return parser


def _inner(args) -> InnerSolverConfig:
    return InnerSolverConfig(
        mode=args.inner_mode,
        abs_tol=args.inner_tol,
        rel_tol=args.inner_tol,
        substeps=args.substeps,
        implicit_method=args.inner_method,
    )


def _overrides(text: Optional[str]):
    if text is None:
        return None
    if text.lstrip().startswith("{"):
        return json.loads(text)
    return text


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def _cmd_verify(args):
    if args.file:
        schemes = [load_scheme(args.file)]
    else:
        schemes = [registry_lookup(n) for n in (args.method or available_methods())]
    ok = True
    docs, rows = [], []
    for s in schemes:
        reports = verify_scheme(s, args.tol)
        passed = all_required_pass(reports)
        ok &= passed
        docs.append({"method": s.name, "passed": passed, "conditions": [r.to_dict() for r in reports]})
        rows += [[s.name, r.condition, _num(r.residual), _num(r.tolerance), int(r.passed), int(r.required)]
                 for r in reports]
    if args.json:
        text = json.dumps({"passed": ok, "methods": docs}, indent=2)
    else:
        text = _csv(["method", "condition", "residual", "tolerance", "passed", "required"], rows)
    return text, 0 if ok else 1


def _cmd_integrate(args):
    p = make_problem(args.problem, _overrides(args.config))
    res = integrate(args.method, p.system, p.t_span, p.y0, args.H, _inner(args),
                    NewtonConfig(tol=args.newton_tol), embedded=False, store=False)
    y = res.y_final
    doc = {"method": args.method, "problem": args.problem, "H": args.H, "t_final": float(res.t[-1]),
           "stats": res.stats.to_dict(), "y_final": [float(v) for v in y]}
    if p.system.exact_solution is not None:
        doc["error"] = harness.error_norm(y - p.system.exact_solution(p.t_span[1]))
    if args.json:
        return json.dumps(doc, indent=2), 0
    return _csv(["index", "value"], [[i, _num(v)] for i, v in enumerate(y)]), 0


def _cmd_converge(args):
    study = harness.run_convergence(
        args.method, args.problem, args.steps, overrides=_overrides(args.config), norm=args.norm,
        inner=_inner(args), newton=NewtonConfig(tol=args.newton_tol),
    )
    if args.json:
        return json.dumps(study.to_dict(), indent=2), 0
    rows = [[study.scheme, r.steps, _num(r.H), _num(r.error), _num(study.slope)] for r in study.rows]
    return _csv(["scheme", "steps", "H", "error", "slope"], rows), 0


def _cmd_stability(args):
    s = registry_lookup(args.method)
    q = StabilityQuery(rho=args.rho, alpha_deg=args.alpha, window=tuple(args.window), resolution=args.res,
                       xi=args.xi, coupling_alpha=args.coupling_alpha, literal_matrix=args.literal_matrix)
    inside = scan_region(s, q, args.kind)
    zs = q.grid()
    if args.json:
        doc = {"method": s.name, "kind": args.kind, "rho": None if math.isinf(args.rho) else args.rho,
               "alpha": args.alpha, "window": list(args.window), "resolution": args.res,
               "fraction_inside": float(inside.mean()),
               "points": [[float(z.real), float(z.imag), bool(ok)] for z, ok in zip(zs.ravel(), inside.ravel())]}
        return json.dumps(doc, indent=2), 0
    rows = [[_num(z.real), _num(z.imag), int(bool(ok))] for z, ok in zip(zs.ravel(), inside.ravel())]
    return _csv(["re_zs", "im_zs", "inside"], rows), 0


def _cmd_work_precision(args):
    for name in args.methods:
        if name not in BASE_TABLEAUS:
            registry_lookup(name)
    rows = harness.run_work_precision(
        args.methods, args.problem, args.H, overrides=_overrides(args.config), inner=_inner(args),
        newton=NewtonConfig(tol=args.newton_tol), repeats=args.repeats,
    )
    speedups = {}
    if args.baseline:
        speedups = {m: harness.matched_speedups(rows, args.baseline, m) for m in args.methods if m != args.baseline}
    if args.json:
        return json.dumps({"rows": [r.to_dict() for r in rows], "speedups": speedups}, indent=2), 0
    table = [[r.scheme, _num(r.H), _num(r.error), _num(r.seconds), r.newton_iters, r.inner_steps] for r in rows]
    return _csv(["scheme", "H", "error", "seconds", "newton_iters", "inner_steps"], table), 0


def _cmd_export(args):
    names = args.method or available_methods()
    return json.dumps([scheme_to_dict(registry_lookup(n)) for n in names], indent=2), 0


_COMMANDS = {
    "verify": _cmd_verify,
    "integrate": _cmd_integrate,
    "converge": _cmd_converge,
    "stability": _cmd_stability,
    "work-precision": _cmd_work_precision,
    "export-methods": _cmd_export,
}


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(parser.format_usage())
        sys.stderr.write(f"{exc}\n")
        return 2
    if args.command is None:
        sys.stderr.write(parser.format_help())
        return 2
    np.random.seed(args.seed)
    try:
        text, code = _COMMANDS[args.command](args)
    except (UnknownMethodError, KeyError, ValueError, RuntimeError, OSError, FloatingPointError) as exc:
        err = {"error": type(exc).__name__, "message": str(exc), "command": args.command}
        sys.stdout.write(json.dumps(err) + "\n")
        return 1
    _emit(text, args.out)
    return code


if __name__ == "__main__":
    sys.exit(main())
