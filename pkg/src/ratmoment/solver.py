"""Minimization of the dual functional over the closed polynomial cone.

``J(q) = <c, q> - int_K P log Q`` is strictly convex.  Its minimizer either
lies inside the cone, where ``c = f^p(q)``, or on the boundary, where the
moments split as ``c = f^p(q_hat) + c_hat`` with ``<c_hat, q_hat> = 0``.

The discrete problem keeps ``Q >= 0`` on the probe lattice (cell vertices,
box faces included) through a logarithmic barrier that is driven to zero.
The barrier multipliers make up ``c_hat``.  If the final iterate is
interior the barrier is dropped and plain Newton polishes the stationarity
equations to ``grad_tol``.
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import linprog

from ._validation import as_vector, check_positive
from .cones import ConeVerdict, classify_moment, polynomial_cone_check
from .domain import GridTableau
from .exceptions import ConfigurationError, IllConditionedError, NotInDualConeError
from .quadrature import moment_map
from .recovery import ZeroSet, find_zero_set


@dataclass
class SolverOptions:
    """Tuning knobs for :func:`solve_dual`.

    ``barrier_start`` and ``barrier_stop`` give the total barrier weight
    (weight per probe node times the number of probe nodes) relative to
    ``int_K P``; the final weight bounds the complementary slackness.
    """

    max_iters: int = 200
    grad_tol: Optional[float] = None
    shrink: float = 0.5
    armijo: float = 1e-4
    boundary_tol: float = 1e-5
    barrier_start: float = 1e-2
    barrier_stop: float = 1e-9
    barrier_decay: float = 0.1
    cond_limit: float = 1e14
    track_lower_bound: bool = False

    def __post_init__(self):
        check_positive(self.max_iters, "max_iters")
        if self.grad_tol is not None:
            check_positive(self.grad_tol, "grad_tol")
        if not 0 < self.shrink < 1:
            raise ConfigurationError(f"shrink must lie in (0, 1), got {self.shrink}")
        if not 0 < self.barrier_decay < 1:
            raise ConfigurationError(f"barrier_decay must lie in (0, 1), got {self.barrier_decay}")
        for name in ("armijo", "boundary_tol", "barrier_start", "barrier_stop", "cond_limit"):
            check_positive(getattr(self, name), name)
        if self.barrier_stop > self.barrier_start:
            raise ConfigurationError("barrier_stop must not exceed barrier_start")

    def resolved_grad_tol(self, c) -> float:
        if self.grad_tol is not None:
            return self.grad_tol
        return 1e-9 * (1.0 + float(np.linalg.norm(c)))


@dataclass
class SolveOutcome:
    q_hat: np.ndarray
    converged: bool
    iterations: int
    objective_value: float
    gradient_residual: np.ndarray
    boundary: bool
    zero_set: ZeroSet
    kkt: dict
    min_q_relative: float
    barrier_weight: float
    message: str = ""
    c_hat_verdict: Optional[ConeVerdict] = None
    trace: list = field(default_factory=list)

    @property
    def c_hat(self) -> np.ndarray:
        """Singular moment residual; zero up to ``grad_tol`` for interior solutions."""
        return self.gradient_residual

    def as_dict(self) -> dict:
        return {
            "q_hat": self.q_hat.tolist(),
            "converged": self.converged,
            "iterations": self.iterations,
            "objective_value": self.objective_value,
            "c_hat": self.gradient_residual.tolist(),
            "boundary": self.boundary,
            "min_q_relative": self.min_q_relative,
            "barrier_weight": self.barrier_weight,
            "zero_set": self.zero_set.as_dict(),
            "kkt": self.kkt,
            "c_hat_verdict": None if self.c_hat_verdict is None else self.c_hat_verdict.as_dict(),
            "message": self.message,
        }


class _Problem:
    """Discrete objective plus probe-lattice barrier."""

    def __init__(self, c, p, tableau):
        self.c = c
        self.A = tableau.values
        self.w = tableau.weights
        self.B = tableau.probe_values
        P = self.A @ p
        self.active = P != 0
        self.Aa = self.A[self.active]
        self.wP = (self.w * P)[self.active]
        self.m = self.B.shape[0]

    def feasible(self, q, mu):
        if np.any(self.Aa @ q <= 0):
            return False
        return mu == 0 or not np.any(self.B @ q <= 0)

    def merit(self, q, mu):
        Q = self.Aa @ q
        if np.any(Q <= 0):
            return np.inf
        val = self.c @ q - self.wP @ np.log(Q)
        if mu:
            Qb = self.B @ q
            if np.any(Qb <= 0):
                return np.inf
            val -= mu * np.sum(np.log(Qb))
        return float(val)

    def objective(self, q):
        return self.merit(q, 0.0)

    def derivatives(self, q, mu):
        Q = self.Aa @ q
        r = self.wP / Q
        g_obj = self.c - self.Aa.T @ r
        H = (self.Aa * (r / Q)[:, None]).T @ self.Aa
        g = g_obj
        if mu:
            Qb = self.B @ q
            g = g_obj - mu * (self.B.T @ (1.0 / Qb))
            H = H + mu * (self.B * (1.0 / Qb**2)[:, None]).T @ self.B
        return g_obj, g, 0.5 * (H + H.T)


def _newton_direction(H, g, cond_limit):
    d = np.sqrt(np.clip(np.diag(H), 1e-300, None))
    Hs = H / np.outer(d, d)
    eig = np.linalg.eigvalsh(Hs)
    cond = np.inf if eig[0] <= 0 else eig[-1] / eig[0]
    if cond > cond_limit:
        raise IllConditionedError(
            f"Newton system has scaled condition number {cond:.2e} > {cond_limit:.0e}; "
            "try a higher grid resolution"
        )
    gs = g / d
    try:
        step = -cho_solve(cho_factor(Hs), gs)
    except LinAlgError:
        reg = Hs + 1e-12 * np.trace(Hs) * np.eye(Hs.shape[0])
        step = -cho_solve(cho_factor(reg), gs)
    return step / d


def _positive_polynomial(tableau):
    """A direction strictly inside the discrete polynomial cone (Chebyshev LP)."""
    rows = tableau.all_values
    n = tableau.n
    cost = np.zeros(n + 1)
    cost[-1] = -1.0
    res = linprog(cost, A_ub=np.hstack([-rows, np.ones((rows.shape[0], 1))]),
                  b_ub=np.zeros(rows.shape[0]), bounds=[(-1, 1)] * n + [(None, 1)],
                  method="highs-ds")
    if res.status != 0 or res.x[-1] <= 0:
        raise ConfigurationError("the polynomial cone has empty interior on this grid")
    return res.x[:n]


def initial_point(c, p, tableau):
    """A feasible ``q`` on the ray of best scale through ``p``.

    Along ``q = t d`` the objective is ``t <c, d> - log(t) int P + const``,
    minimized at ``t = int P / <c, d>``.  If ``P`` has zeros on the grid, a
    strictly positive polynomial is mixed into the direction ``d``.
    """
    Pall = tableau.all_values @ p
    pmax = float(np.max(np.abs(Pall)))
    if Pall.min() > 1e-3 * pmax:
        direction = p
    else:
        qpos = _positive_polynomial(tableau)
        direction = p / pmax + qpos / float(np.max(np.abs(tableau.all_values @ qpos)))
    eps_p = tableau.integrate(tableau.values @ p)
    cd = float(c @ direction)
    if cd <= 0:
        raise NotInDualConeError(
            "<c, q> <= 0 for a nonnegative polynomial q: c is not in the dual cone"
        )
    return (eps_p / cd) * direction


def lower_bound_constants(c, p, tableau):
    """``(eps_c, eps_p)`` such that ``J(q) >= eps_c ||Q|| - eps_p log ||Q||``.

    ``eps_c = min{<c, q> : Q >= 0, ||q||_inf = 1} / (n max|alpha|)``, with
    norms of Q taken over nodes where P is nonzero.  Returns ``eps_c = nan``
    when the minimum is unbounded on the grid cone.
    """
    n = tableau.n
    P = tableau.values @ p
    rows = tableau.values[P != 0]
    eps_p = tableau.integrate(P)
    M = float(np.max(np.abs(rows)))
    best = np.inf
    for k in range(n):
        for sign in (1.0, -1.0):
            a_eq = np.zeros((1, n))
            a_eq[0, k] = sign
            res = linprog(c, A_ub=-rows, b_ub=np.zeros(rows.shape[0]), A_eq=a_eq, b_eq=[1.0],
                          bounds=[(-1, 1)] * n, method="highs-ds")
            if res.status == 0:
                best = min(best, float(res.fun))
            elif res.status == 3:
                return np.nan, eps_p
    return best / (n * M), eps_p


def solve_dual(c, p, tableau: GridTableau, opts: Optional[SolverOptions] = None, q0=None,
               verify=True) -> SolveOutcome:
    """Minimize the dual functional for moments ``c`` and numerator ``p``.

    Parameters
    ----------
    c : array_like, shape (n,)
        Moment vector, assumed strictly inside the dual cone.
    p : array_like, shape (n,)
        Numerator coefficients; ``P >= 0`` on K and ``p != 0``.
    tableau : GridTableau
    opts : SolverOptions, optional
    q0 : array_like, optional
        Strictly feasible starting point; defaults to :func:`initial_point`.
    verify : bool
        Classify ``c_hat`` against the dual cone after convergence.

    Returns
    -------
    SolveOutcome
        Non-convergence is reported through ``converged=False`` and
        ``message``, not raised.
    """
    opts = opts or SolverOptions()
    n = tableau.n
    c = as_vector(c, n, "c")
    p = as_vector(p, n, "p")
    if not np.any(p):
        raise ConfigurationError("p must be nonzero")
    pv = polynomial_cone_check(p, tableau)
    if pv.region == "exterior":
        raise ConfigurationError(f"P is negative on K (min {pv.min_value:.3e})")
    if c @ p <= 0:
        warnings.warn("<c, p> <= 0: c is probably not inside the dual cone", RuntimeWarning)

    prob = _Problem(c, p, tableau)
    eps_p = float(np.sum(prob.wP))
    if eps_p <= 0:
        raise ConfigurationError("int_K P vanishes on the grid")
    grad_tol = opts.resolved_grad_tol(c)

    mu = opts.barrier_start * eps_p / prob.m
    mu_stop = opts.barrier_stop * eps_p / prob.m
    q = initial_point(c, p, tableau) if q0 is None else as_vector(q0, n, "q0")
    if not prob.feasible(q, mu):
        raise ConfigurationError("starting point is not strictly feasible")
    bound = lower_bound_constants(c, p, tableau) if opts.track_lower_bound else None

    trace = []
    iters = 0
    message = ""
    converged = False

    def record(phase, mu_, q_, g_obj, dec, step):
        Q = prob.Aa @ q_
        row = {
            "iteration": iters,
            "phase": phase,
            "mu": mu_,
            "objective": prob.objective(q_),
            "merit": prob.merit(q_, mu_),
            "grad_norm": float(np.linalg.norm(g_obj)),
            "decrement": dec,
            "step": step,
            "min_q": float(min(Q.min(), (prob.B @ q_).min())),
        }
        if bound is not None and np.isfinite(bound[0]):
            qn = float(Q.max())
            row["lower_bound"] = bound[0] * qn - bound[1] * np.log(qn)
        trace.append(row)

    def newton_phase(mu_, phase, dec_tol):
        nonlocal q, iters
        while True:
            g_obj, g, H = prob.derivatives(q, mu_)
            step_dir = _newton_direction(H, g, opts.cond_limit)
            if phase == "polish" and np.linalg.norm(g_obj) <= grad_tol:
                # one more full step costs little and squares the error
                trial = q + step_dir
                if prob.merit(trial, 0.0) <= prob.merit(q, 0.0) and \
                        np.linalg.norm(prob.derivatives(trial, 0.0)[0]) < np.linalg.norm(g_obj):
                    q = trial
                    iters += 1
                    record(phase, mu_, q, prob.derivatives(q, mu_)[0], -float(g @ step_dir), 1.0)
                return True
            slope = float(g @ step_dir)
            dec = -slope
            f0 = prob.merit(q, mu_)
            if dec <= dec_tol:
                return True
            if iters >= opts.max_iters:
                return False
            t = 1.0
            while True:
                trial = q + t * step_dir
                f1 = prob.merit(trial, mu_)
                if np.isfinite(f1) and f1 <= f0 + opts.armijo * t * slope:
                    break
                t *= opts.shrink
                if t < 1e-14:
                    noise = 1e-13 * (abs(f0) + eps_p)
                    return dec <= noise or (phase == "polish" and np.linalg.norm(g_obj) <= 1e3 * grad_tol)
            q = trial
            iters += 1
            record(phase, mu_, q, prob.derivatives(q, mu_)[0], dec, t)

    record("start", mu, q, prob.derivatives(q, mu)[0], float("nan"), 0.0)
    ok = True
    while True:
        final = mu <= mu_stop * (1 + 1e-12)
        dec_tol = 1e-18 * eps_p if final else 1e-2 * mu * prob.m
        try:
            ok = newton_phase(mu, "barrier", dec_tol)
        except IllConditionedError:
            if len(trace) <= 1:
                raise
            message = f"barrier continuation stopped at weight {mu * prob.m:.2e} (ill-conditioned)"
            ok = True
            break
        if not ok or final:
            break
        mu = max(mu * opts.barrier_decay, mu_stop)
    barrier_weight = mu * prob.m

    qv = polynomial_cone_check(q, tableau)
    q_inf = float(np.max(np.abs(tableau.all_values @ q)))
    min_rel = qv.min_value / q_inf
    boundary = min_rel < opts.boundary_tol
    if ok and not boundary:
        q_barrier = q.copy()
        try:
            ok = newton_phase(0.0, "polish", 0.0)
        except IllConditionedError:
            q, ok = q_barrier, False
        if ok:
            qv = polynomial_cone_check(q, tableau)
            min_rel = qv.min_value / float(np.max(np.abs(tableau.all_values @ q)))
            barrier_weight = 0.0
    converged = bool(ok)
    if not converged and not message:
        message = f"not converged after {iters} Newton steps"

    f_hat = moment_map(p, q, tableau)
    c_hat = c - f_hat
    zero_set = find_zero_set(q, tableau, opts.boundary_tol) if boundary else ZeroSet.empty(tableau.domain.dim)
    slack = float(c_hat @ q)
    slack_tol = 1e-6 * (1.0 + float(np.linalg.norm(c)) * float(np.linalg.norm(q)))
    verdict = None
    if verify:
        verdict = classify_moment(c_hat, tableau, tol=slack_tol)
    kkt = {
        "feasibility_ok": bool(qv.region != "exterior" and (verdict is None or verdict.region == "boundary")),
        "moment_residual_norm": float(np.linalg.norm(c - f_hat - c_hat)),
        "slackness": slack,
        "slackness_ok": bool(abs(slack) <= slack_tol),
    }
    return SolveOutcome(
        q_hat=q,
        converged=converged,
        iterations=iters,
        objective_value=prob.objective(q),
        gradient_residual=c_hat,
        boundary=bool(boundary),
        zero_set=zero_set,
        kkt=kkt,
        min_q_relative=float(min_rel),
        barrier_weight=float(barrier_weight),
        message=message,
        c_hat_verdict=verdict,
        trace=trace,
    )


def kkt_verify(outcome: SolveOutcome, c, p, tableau: GridTableau, moment_tol=None,
               slack_tol=None) -> dict:
    """Recheck feasibility, moment matching and complementary slackness.

    Everything is recomputed from ``tableau``; only ``q_hat`` and ``c_hat``
    are taken from the outcome.
    """
    n = tableau.n
    c = as_vector(c, n, "c")
    p = as_vector(p, n, "p")
    q = np.asarray(outcome.q_hat, dtype=float)
    c_hat = np.asarray(outcome.c_hat, dtype=float)
    cn, qn = float(np.linalg.norm(c)), float(np.linalg.norm(q))
    moment_tol = 1e-6 * (1.0 + cn) if moment_tol is None else moment_tol
    slack_tol = 1e-6 * (1.0 + cn * qn) if slack_tol is None else slack_tol

    qv = polynomial_cone_check(q, tableau)
    from .quadrature import _ratio

    A = tableau.values
    r, _ = _ratio(A @ p, A @ q, tableau.weights)
    f_hat = A.T @ (tableau.weights * r)
    residual = float(np.linalg.norm(c - f_hat - c_hat))
    cv = classify_moment(c_hat, tableau, tol=slack_tol)
    slack = float(c_hat @ q)
    out = {
        "q_region": qv.region,
        "q_min": qv.min_value,
        "c_hat_region": cv.region,
        "c_hat_V": cv.V,
        "feasibility_ok": bool(qv.region != "exterior" and cv.region == "boundary"),
        "moment_residual_norm": residual,
        "moment_ok": bool(residual <= moment_tol),
        "slackness": slack,
        "slackness_ok": bool(abs(slack) <= slack_tol),
        "moment_tol": moment_tol,
        "slack_tol": slack_tol,
    }
    out["passed"] = out["feasibility_ok"] and out["moment_ok"] and out["slackness_ok"]
    return out


def roundtrip(p, q, tableau: GridTableau, opts: Optional[SolverOptions] = None) -> np.ndarray:
    """Recover ``q`` from its own moments ``c = f^p(q)``."""
    c = moment_map(p, q, tableau)
    return solve_dual(c, p, tableau, opts, verify=False).q_hat


@dataclass
class ContinuityTable:
    steps: list
    q_hats: list
    truncated: bool = False
    reason: str = ""


def continuity_probe(c, p, direction, steps, tableau: GridTableau,
                     opts: Optional[SolverOptions] = None) -> ContinuityTable:
    """Minimizers along the numerator path ``p + t * direction``."""
    n = tableau.n
    p = as_vector(p, n, "p")
    direction = as_vector(direction, n, "direction")
    table = ContinuityTable([], [])
    for t in steps:
        pt = p + float(t) * direction
        if not np.any(pt) or polynomial_cone_check(pt, tableau).region == "exterior":
            table.truncated = True
            table.reason = f"p + t*direction leaves the polynomial cone at t={t}"
            break
        out = solve_dual(c, pt, tableau, opts, verify=False)
        table.steps.append(float(t))
        table.q_hats.append(out.q_hat)
    return table
