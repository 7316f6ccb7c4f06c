"""Scenario files, the run pipeline and report/plot-data emission.

A scenario is a YAML mapping.  ``kind: solve`` (default) runs
classify -> solve -> atoms -> duality; ``kind: non-lipschitz`` and
``kind: integrability`` run the quadrature diagnostics.  Expected values
live under ``expected``; each entry carries its own tolerance and an
``origin`` tag saying where the number comes from.
"""

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import __version__
from .cones import classify_moment, polynomial_cone_check
from .config import parse_number, parse_vector
from .domain import build_tableau, make_basis, points_in
from .duality import duality_table
from .exceptions import ConfigurationError, DomainError, RecoveryError
from .quadrature import divergence_diagnostic, moment_map
from .recovery import AtomicMeasure, recover_atoms
from .solver import SolverOptions, solve_dual

KINDS = ("solve", "non-lipschitz", "integrability")
MOMENT_SOURCES = ("explicit", "forward", "forward-plus-atoms")
ORIGINS = ("published-example", "closed-form", "self-consistency", "identity")
BUNDLED = ("E1", "E2", "E3", "E4", "E5", "E6")
SOLVER_KEYS = ("max_iters", "grad_tol", "boundary_tol")


@dataclass
class Scenario:
    name: str
    description: str
    kind: str
    data: dict
    path: Optional[Path] = None
    metadata: dict = field(default_factory=dict)

    @property
    def expected(self) -> dict:
        return self.data.get("expected") or {}


def _mark_of(path, keys):
    """``path:line:col`` of the YAML node at ``keys`` (deepest existing one)."""
    if path is None:
        return "<scenario>"
    try:
        node = yaml.compose(Path(path).read_text())
    except (OSError, yaml.YAMLError):
        return str(path)
    mark = node.start_mark if node is not None else None
    for key in keys:
        if isinstance(node, yaml.MappingNode):
            nxt = [(k, v) for k, v in node.value if k.value == key]
            if not nxt:
                break
            mark = nxt[0][0].start_mark
            node = nxt[0][1]
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            mark = node.start_mark
        else:
            break
    if mark is None:
        return str(path)
    return f"{path}:{mark.line + 1}:{mark.column + 1}"


def _fail(scn_path, keys, message):
    raise ConfigurationError(f"{_mark_of(scn_path, keys)}: {message}")


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("ratmoment") / "data" / f"{name}.yaml"))


def load_scenario(source) -> Scenario:
    """Load a scenario from a bundled name (``"E1"``) or a file path."""
    from .config import load_yaml

    if isinstance(source, str) and source in BUNDLED:
        path = bundled_path(source)
    else:
        path = Path(source)
    data = load_yaml(path)
    return validate_scenario(data, path)


def validate_scenario(data: dict, path=None) -> Scenario:
    for key in ("name",):
        if key not in data:
            _fail(path, [], f"missing required key {key!r}")
    kind = data.get("kind", "solve")
    if kind not in KINDS:
        _fail(path, ["kind"], f"unknown kind {kind!r}; expected one of {list(KINDS)}")
    if kind in ("solve", "non-lipschitz"):
        if "basis" not in data:
            _fail(path, [], "missing required key 'basis'")
        try:
            make_basis(data["basis"], check_rank=False)
        except ConfigurationError as exc:
            _fail(path, ["basis"], str(exc))
    if kind == "solve":
        mom = data.get("moments")
        if not isinstance(mom, dict):
            _fail(path, [], "missing required block 'moments'")
        src = mom.get("source", "explicit")
        if src not in MOMENT_SOURCES:
            _fail(path, ["moments", "source"], f"unknown moment source {src!r}")
        needed = {"explicit": ("c", "p"), "forward": ("p", "q"),
                  "forward-plus-atoms": ("p", "q", "atoms")}[src]
        for key in needed:
            if key not in mom:
                _fail(path, ["moments"], f"moment source {src!r} needs {key!r}")
        for key in ("c", "p", "q"):
            if key in mom:
                try:
                    parse_vector(mom[key], key)
                except ConfigurationError as exc:
                    _fail(path, ["moments", key], str(exc))
        for key in (data.get("solver") or {}):
            if key not in SOLVER_KEYS:
                _fail(path, ["solver", key], f"unknown solver option {key!r}")
    if kind == "integrability":
        cases = (data.get("diagnostics") or {}).get("cases")
        if not cases:
            _fail(path, ["diagnostics"], "integrability scenario needs diagnostics.cases")
        for i, case in enumerate(cases):
            if "basis" not in case or "q" not in case:
                _fail(path, ["diagnostics", "cases", i], "each case needs 'basis' and 'q'")
    for key, entry in (data.get("expected") or {}).items():
        if not isinstance(entry, dict) or "value" not in entry:
            _fail(path, ["expected", key], "expected entries need a 'value'")
        if entry.get("origin") not in ORIGINS:
            _fail(path, ["expected", key],
                  f"expected entry needs an origin tag from {list(ORIGINS)}")
    return Scenario(data["name"], data.get("description", ""), kind, data, path,
                    data.get("metadata") or {})


def list_scenarios() -> list:
    """(name, kind, description, metadata) for the bundled scenarios."""
    rows = []
    for name in BUNDLED:
        scn = load_scenario(name)
        rows.append({"name": scn.name, "kind": scn.kind, "description": scn.description,
                     "metadata": scn.metadata})
    return rows


# ---------------------------------------------------------------------------
# problem assembly


def _grid(data):
    grid = data.get("grid") or {}
    res = grid.get("resolution", 512)
    return res, grid.get("rule", "midpoint")


def solver_options(data) -> SolverOptions:
    kw = {}
    for key, val in (data.get("solver") or {}).items():
        kw[key] = int(val) if key == "max_iters" else parse_number(val)
    return SolverOptions(**kw)


def resolve_moments(data, tableau):
    """Concrete ``(c, p)`` from the moments block."""
    mom = data["moments"]
    src = mom.get("source", "explicit")
    p = parse_vector(mom["p"], "p")
    if src == "explicit":
        return parse_vector(mom["c"], "c"), p
    q = parse_vector(mom["q"], "q")
    c = moment_map(p, q, tableau, refine=bool(mom.get("refine", False)))
    if src == "forward-plus-atoms":
        for atom in mom["atoms"]:
            loc = parse_vector(atom["location"], "atom location")
            c = c + parse_number(atom["mass"]) * tableau.basis.values(loc[None])[0]
    return c, p


def _vec(x):
    return [float(v) for v in np.asarray(x, dtype=float).ravel()]


def _check(checks, name, entry, actual):
    """Compare against one expected entry; appends a check row."""
    value = entry["value"]
    tol = entry.get("tol")
    row = {"name": name, "origin": entry["origin"], "expected": value, "tol": tol}
    if isinstance(value, (bool, str)) or value is None:
        ok = actual == value
        row["actual"] = actual
    elif isinstance(value, list):
        exp = parse_vector(value, name)
        act = np.asarray(actual, dtype=float)
        err = float(np.max(np.abs(act - exp))) if act.shape == exp.shape else math.inf
        ok = err <= float(parse_number(tol))
        row.update(actual=_vec(act), error=err)
    else:
        exp = parse_number(value)
        err = abs(float(actual) - exp)
        if entry.get("rel"):
            err /= abs(exp)
        mode = entry.get("compare", "abs")
        if mode == "max":
            ok = float(actual) <= exp
        else:
            ok = err <= float(parse_number(tol))
        row.update(actual=float(actual), error=err)
    row["passed"] = bool(ok)
    checks.append(row)


def _run_solve(scn: Scenario):
    data = scn.data
    basis = make_basis(data["basis"])
    res, rule = _grid(data)
    tableau = build_tableau(basis, res, rule)
    c, p = resolve_moments(data, tableau)
    opts = solver_options(data)

    c_verdict = classify_moment(c, tableau)
    p_verdict = polynomial_cone_check(p, tableau)
    out = solve_dual(c, p, tableau, opts)
    measure = None
    atoms_error = None
    if out.boundary:
        try:
            measure = recover_atoms(out.c_hat, out.zero_set, basis)
        except RecoveryError as exc:
            atoms_error = str(exc)
    dual = duality_table(c, p, out.q_hat, tableau)

    actual = {
        "q_hat": out.q_hat,
        "c_hat": out.c_hat,
        "boundary": out.boundary,
        "converged": out.converged,
        "c_region": c_verdict.region,
        "c_hat_region": None if out.c_hat_verdict is None else out.c_hat_verdict.region,
        "zero_set_kind": out.zero_set.support_kind if out.boundary else None,
        "slackness": abs(out.kkt["slackness"]),
        "duality_gap": dual["gap"],
    }
    if measure is not None:
        actual.update(atoms_total_mass=measure.total_mass,
                      atoms_moments=measure.moments(basis),
                      uniqueness=measure.uniqueness)
    checks = []
    for key, entry in scn.expected.items():
        if key not in actual:
            checks.append({"name": key, "origin": entry.get("origin"), "expected": entry["value"],
                           "actual": None, "passed": False,
                           "note": atoms_error or "quantity not produced by this run"})
            continue
        _check(checks, key, entry, actual[key])
    report = {
        "problem": {"basis": basis.describe(), "basis_spec": data["basis"], "c": _vec(c),
                    "p": _vec(p)},
        "verdicts": {"c": c_verdict.as_dict(), "p_region": p_verdict.region,
                     "p_min": p_verdict.min_value},
        "solve": out.as_dict(),
        "atoms": None if measure is None else measure.as_dict(),
        "atoms_error": atoms_error,
        "duality": dual,
        "tableau": tableau.summary(),
    }
    files = {"trace.csv": trace_csv(out.trace),
             "atoms.csv": (measure or _empty_measure(basis)).to_csv()}
    return report, checks, files


def _empty_measure(basis):
    return AtomicMeasure(np.zeros((0, basis.dim)), np.zeros(0), "unique", "isolated-points")


def trace_csv(trace) -> str:
    cols = ["iteration", "phase", "mu", "objective", "merit", "grad_norm", "decrement", "step",
            "min_q", "lower_bound"]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in trace:
        w.writerow([repr(row[k]) if isinstance(row.get(k), float) else row.get(k, "") for k in cols])
    return buf.getvalue()


def probe_sequence(basis, ks, resolution):
    """``f_1(q_k)`` for ``q_k = 3 (k^-2 + k^-4, 2/k, 1)`` and ``P = 1``."""
    tableau = build_tableau(basis, resolution)
    p = np.zeros(basis.n)
    p[0] = 1.0
    out = []
    for k in ks:
        k = float(k)
        q = 3.0 * np.array([k**-2 + k**-4, 2.0 / k, 1.0])
        out.append(float(moment_map(p, q, tableau, refine=True)[0]))
    return out


def _run_non_lipschitz(scn: Scenario):
    data = scn.data
    basis = make_basis(data["basis"])
    diag = data.get("diagnostics") or {}
    res, _ = _grid(data)
    tableau = build_tableau(basis, res)
    p = parse_vector(diag.get("p", [1, 0, 0]), "p")
    q = parse_vector(diag.get("q", [0, 0, 3]), "q")
    integral = float(moment_map(p, q, tableau, refine=True)[0])
    ks = diag.get("ks", [4, 8, 16, 32])
    seq = probe_sequence(basis, ks, res)
    limit = parse_number(diag.get("limit", "2 + pi"))
    monotone = all(b > a for a, b in zip(seq[:-1], seq[1:])) and seq[-1] < limit
    actual = {"integral": integral, "probe_monotone": bool(monotone),
              "probe_last_rel_error": abs(seq[-1] - limit) / limit}
    checks = []
    for key, entry in scn.expected.items():
        _check(checks, key, entry, actual[key])
    report = {"integral": integral, "probe": {"k": list(ks), "f1": seq, "limit": limit},
              "problem": {"basis": basis.describe(), "basis_spec": data["basis"]}}
    return report, checks, {}


def _run_integrability(scn: Scenario):
    cases = scn.data["diagnostics"]["cases"]
    rows = []
    actual = {}
    for case in cases:
        basis = make_basis(case["basis"])
        tableau = build_tableau(basis, case.get("resolution", 64))
        q = parse_vector(case["q"], "q")
        rep = divergence_diagnostic(q, tableau, refinements=int(case.get("refinements", 2)))
        label = case.get("label", f"d{basis.dim}")
        rows.append({"label": label, "verdict": rep.verdict, "estimates": rep.estimates,
                     "resolutions": rep.resolutions, "note": rep.note})
        actual[f"{label}_verdict"] = rep.verdict
    checks = []
    for key, entry in scn.expected.items():
        _check(checks, key, entry, actual.get(key))
    return {"cases": rows}, checks, {}


_RUNNERS = {"solve": _run_solve, "non-lipschitz": _run_non_lipschitz,
            "integrability": _run_integrability}


def run_scenario(source, output_dir=None) -> dict:
    """Run one scenario and return its report; writes files if ``output_dir`` is set.

    The report's ``passed`` field says whether all expected checks held.
    """
    scn = source if isinstance(source, Scenario) else load_scenario(source)
    t0 = time.perf_counter()
    body, checks, files = _RUNNERS[scn.kind](scn)
    elapsed = time.perf_counter() - t0
    report = {
        "scenario": scn.name,
        "description": scn.description,
        "kind": scn.kind,
        "tool_version": __version__,
        "metadata": scn.metadata,
        "checks": checks,
        "passed": all(c["passed"] for c in checks),
        "timing": {"seconds": elapsed},
    }
    report.update(body)
    if output_dir is not None:
        out = Path(output_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(dumps_report(report))
        for fname, text in files.items():
            (out / fname).write_text(text)
        if scn.kind == "solve" and report["solve"]["converged"]:
            (out / "plotdata.csv").write_text(emit_plotdata(report))
    return report


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else repr(obj)
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    return obj


def dumps_report(report: dict) -> str:
    """Stable JSON: sorted keys, fixed indentation, non-finite floats as strings."""
    return json.dumps(_clean(report), sort_keys=True, indent=2, default=_json_default) + "\n"


def strip_timing(report: dict) -> dict:
    return {k: v for k, v in report.items() if k != "timing"}


# ---------------------------------------------------------------------------
# plot data


def emit_plotdata(report: dict, axis: int = 0, at=None, points: int = 201) -> str:
    """CSV of ``x, P, Q_hat, P/Q_hat`` along one coordinate axis.

    ``axis`` is 0-based; the other coordinates are fixed at ``at`` (default:
    the box center).  Atoms follow in a separate ``# atoms`` stanza.
    """
    if "solve" not in report or not report["solve"]["converged"]:
        raise ConfigurationError("plot data needs a report with a converged solve")
    basis = make_basis(report["problem"]["basis_spec"], check_rank=False)
    dom = basis.domain
    if not 0 <= axis < dom.dim:
        raise DomainError(f"axis {axis} outside 0..{dom.dim - 1}")
    base = 0.5 * (dom.lower + dom.upper) if at is None else np.asarray(at, dtype=float)
    if base.shape != (dom.dim,):
        raise ConfigurationError(f"slice point needs {dom.dim} coordinates")
    others = [k for k in range(dom.dim) if k != axis]
    probe = base.copy()
    probe[axis] = dom.lower[axis]
    points_in(basis, probe[None])
    xs = np.linspace(dom.lower[axis], dom.upper[axis], int(points))
    pts = np.repeat(base[None], xs.shape[0], axis=0)
    pts[:, axis] = xs
    A = basis.values(pts)
    P = A @ np.asarray(report["problem"]["p"])
    Q = A @ np.asarray(report["solve"]["q_hat"])
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(P == 0, 0.0, P / Q)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    fixed = ", ".join(f"x{k + 1}={float(base[k])!r}" for k in others)
    buf.write(f"# slice along x{axis + 1}" + (f" at {fixed}" if fixed else "") + "\n")
    w.writerow(["x", "P", "Q_hat", "P_over_Q_hat"])
    for row in zip(xs, P, Q, ratio):
        w.writerow([repr(float(v)) for v in row])
    buf.write("\n# atoms\n")
    atoms = (report.get("atoms") or {}).get("atoms") or []
    w.writerow([f"x{k + 1}" for k in range(dom.dim)] + ["mass"])
    for atom in atoms:
        w.writerow([repr(float(v)) for v in atom["location"]] + [repr(float(atom["mass"]))])
    return buf.getvalue()


def render_duality(report: dict) -> str:
    """Plain-text duality table for the ``report`` subcommand."""
    lines = [f"scenario: {report.get('scenario')}"]
    dual = report.get("duality")
    if dual is None:
        lines.append("no duality table (diagnostic scenario)")
    else:
        lines += [
            f"  primal  I_p(P/Q_hat)        {dual['primal']: .12e}",
            f"  dual    J(q_hat)            {dual['dual']: .12e}",
            f"  const   int P (log P - 1)   {dual['entropy_constant']: .12e}",
            f"  gap                         {dual['gap']: .3e}",
        ]
    for chk in report.get("checks", []):
        lines.append(f"  [{'PASS' if chk['passed'] else 'FAIL'}] {chk['name']}")
    lines.append(f"result: {'PASS' if report.get('passed') else 'FAIL'}")
    return "\n".join(lines) + "\n"
