"""Command-line front end.

Exit codes: 0 success or all checks passed, 1 a check failed or the solver
did not converge, 2 configuration or runtime error.
"""

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .cones import classify_moment, dual_lambda
from .config import parse_vector
from .domain import build_tableau, make_basis
from .exceptions import MomentError
from .recovery import discrete_measure, recover_atoms
from .scenarios import (BUNDLED, dumps_report, emit_plotdata, list_scenarios, load_scenario,
                        render_duality, resolve_moments, run_scenario, solver_options, trace_csv,
                        _grid)
from .solver import solve_dual

OUTPUT_ENV = "RATMOMENT_OUTPUT"
EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


def output_root(arg=None) -> Path:
    return Path(arg or os.environ.get(OUTPUT_ENV) or "ratmoment-output")


def _problem(path, resolution=None):
    scn = load_scenario(path)
    if scn.kind != "solve":
        raise MomentError(f"scenario {scn.name} is a {scn.kind} diagnostic, not a moment problem")
    data = scn.data
    basis = make_basis(data["basis"])
    res, rule = _grid(data)
    if resolution:
        res = resolution
    tableau = build_tableau(basis, res, rule)
    c, p = resolve_moments(data, tableau)
    return scn, tableau, c, p


def _write(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(text)


def cmd_classify(args):
    scn, tableau, c, _ = _problem(args.config, args.resolution)
    if args.c is not None:
        c = parse_vector([s for s in args.c.split(",")], "--c")
    verdict = classify_moment(c, tableau, max_rounds=args.rounds)
    if args.lambda_hat:
        verdict.lambda_hat = dual_lambda(c, tableau)
    _write(dumps_report({"c": c.tolist(), "verdict": verdict.as_dict()}), args.output)
    return EXIT_PASS


def _options(scn, args):
    opts = solver_options(scn.data)
    for key in ("max_iters", "grad_tol", "boundary_tol"):
        val = getattr(args, key, None)
        if val is not None:
            setattr(opts, key, val)
    opts.__post_init__()
    return opts


def cmd_solve(args):
    scn, tableau, c, p = _problem(args.config, args.resolution)
    out = solve_dual(c, p, tableau, _options(scn, args))
    doc = {"scenario": scn.name, "tool_version": __version__, "outcome": out.as_dict()}
    if args.output:
        dest = Path(args.output)
        dest.mkdir(parents=True, exist_ok=True)
        (dest / "outcome.json").write_text(dumps_report(doc))
        (dest / "trace.csv").write_text(trace_csv(out.trace))
    else:
        sys.stdout.write(dumps_report(doc))
    return EXIT_PASS if out.converged else EXIT_FAIL


def cmd_atoms(args):
    scn, tableau, c, p = _problem(args.config, args.resolution)
    if args.discrete:
        measure = discrete_measure(c, tableau)
    else:
        out = solve_dual(c, p, tableau, _options(scn, args))
        if not out.converged:
            sys.stderr.write(f"solver did not converge: {out.message}\n")
            return EXIT_FAIL
        measure = recover_atoms(out.c_hat, out.zero_set, tableau.basis)
    _write(measure.to_csv(), args.output)
    sys.stderr.write(f"{len(measure)} atoms, total mass {measure.total_mass:.10g}, "
                     f"{measure.uniqueness}, {measure.support_kind}\n")
    return EXIT_PASS


def cmd_report(args):
    report = json.loads(Path(args.report).read_text())
    _write(render_duality(report), args.output)
    return EXIT_PASS if report.get("passed") else EXIT_FAIL


def _run_one(item):
    source, out_dir = item
    report = run_scenario(source, out_dir)
    return report["scenario"], report["passed"]


def cmd_run(args):
    root = output_root(args.output_root)
    items = []
    for source in args.scenarios:
        scn = load_scenario(source)
        items.append((source, str(root / scn.name)))
    if args.jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_run_one, items))
    else:
        results = [_run_one(item) for item in items]
    for name, passed in results:
        print(f"{name}: {'PASS' if passed else 'FAIL'}")
    return EXIT_PASS if all(p for _, p in results) else EXIT_FAIL


def cmd_list(args):
    for row in list_scenarios():
        meta = ", ".join(f"{k}={v}" for k, v in sorted(row["metadata"].items()))
        line = f"{row['name']}  {row['kind']:<14} {row['description']}"
        print(line + (f"  [{meta}]" if meta else ""))
    return EXIT_PASS


def cmd_emit_plotdata(args):
    report = json.loads(Path(args.report).read_text())
    at = None if args.at is None else np.array(parse_vector(args.at.split(","), "--at"))
    _write(emit_plotdata(report, axis=args.axis - 1, at=at, points=args.points), args.output)
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ratmoment", description="rational moment problem solver")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def problem_args(sp):
        sp.add_argument("config", help="scenario file or bundled name (E1..E6)")
        sp.add_argument("--resolution", type=int, help="override the grid resolution")
        sp.add_argument("-o", "--output", help="output path (default: stdout)")

    def solver_args(sp):
        sp.add_argument("--max-iters", type=int, dest="max_iters")
        sp.add_argument("--grad-tol", type=float, dest="grad_tol")
        sp.add_argument("--boundary-tol", type=float, dest="boundary_tol")

    sp = sub.add_parser("classify", help="locate c relative to the dual cone")
    problem_args(sp)
    sp.add_argument("--c", help="comma-separated moment vector overriding the config (use --c=-1,0 for a leading minus)")
    sp.add_argument("--rounds", type=int, default=10, help="constraint-exchange rounds")
    sp.add_argument("--lambda", dest="lambda_hat", action="store_true",
                    help="also compute the distance parameter lambda")
    sp.set_defaults(func=cmd_classify)

    sp = sub.add_parser("solve", help="minimize the dual functional")
    problem_args(sp)
    solver_args(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("atoms", help="atomic part as CSV")
    problem_args(sp)
    solver_args(sp)
    sp.add_argument("--discrete", action="store_true",
                    help="purely atomic measure for c instead of the singular part")
    sp.set_defaults(func=cmd_atoms)

    sp = sub.add_parser("report", help="render the duality table of a run report")
    sp.add_argument("report")
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("run", help="run scenarios end to end")
    sp.add_argument("scenarios", nargs="+", help=f"scenario files or bundled names {list(BUNDLED)}")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--output-root", help=f"output directory (default ${OUTPUT_ENV} or ./ratmoment-output)")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("list", help="list bundled scenarios")
    sp.set_defaults(func=cmd_list)

    sp = sub.add_parser("emit-plotdata", help="1-d slice of P, Q_hat and P/Q_hat from a report")
    sp.add_argument("report")
    sp.add_argument("--axis", type=int, default=1, help="1-based coordinate to vary")
    sp.add_argument("--at", help="comma-separated point fixing the other coordinates")
    sp.add_argument("--points", type=int, default=201)
    sp.add_argument("-o", "--output")
    sp.set_defaults(func=cmd_emit_plotdata)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (MomentError, ValueError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
