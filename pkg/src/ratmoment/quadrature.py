"""Grid integrals: moment map, dual objective, Hessian, divergence probe.

All functions take coefficient vectors ``p`` and ``q`` for the generalized
polynomials ``P = sum p_k alpha_k`` and ``Q = sum q_k alpha_k`` and replace
``int_K`` by the weighted node sum of a :class:`~ratmoment.domain.GridTableau`.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._validation import as_vector
from .domain import GridTableau, build_tableau
from .exceptions import ConfigurationError, InfeasibleDenominatorError


@dataclass
class ObjectiveReport:
    """Value, gradient and Hessian of ``J(q) = <c, q> - int P log Q``.

    An infeasible ``q`` yields ``value = inf`` with no derivatives.
    """

    value: float
    gradient: Optional[np.ndarray] = None
    hessian: Optional[np.ndarray] = None

    @property
    def feasible(self) -> bool:
        return np.isfinite(self.value)


@dataclass
class MomentMapInfo:
    zero_over_zero: int = 0
    refined_cells: int = 0
    depth_reached: int = 0
    truncated: bool = False


@dataclass
class DivergenceReport:
    verdict: str
    estimates: list
    resolutions: list = field(default_factory=list)
    note: str = "growth/stabilization thresholds are heuristics, not a proof"


def _coeffs(p, q, tableau):
    n = tableau.n
    return as_vector(p, n, "p"), as_vector(q, n, "q")


def _ratio(P, Q, weights=None):
    """``P/Q`` with 0/0 -> 0; raises on Q <= 0 where P carries weight."""
    active = P != 0
    if weights is not None:
        active &= weights != 0
    bad = active & (Q <= 0)
    if np.any(bad):
        j = int(np.flatnonzero(bad)[np.argmin(Q[bad])])
        raise InfeasibleDenominatorError(
            f"Q = {Q[j]:.3e} <= 0 at a node where P = {P[j]:.3e}", node=j, value=float(Q[j])
        )
    r = np.zeros_like(P)
    r[active] = P[active] / Q[active]
    zero_over_zero = int(np.sum((P == 0) & (Q == 0)))
    return r, zero_over_zero


def moment_map(p, q, tableau: GridTableau, refine=False, rtol=1e-6, max_depth=12,
               small_q=1e-6, max_points=4_000_000, return_info=False):
    """``f^p(q) = int_K alpha P/Q dx``.

    Parameters
    ----------
    refine : bool
        Adaptively subdivide midpoint cells (4 per axis, recursively up to
        ``max_depth`` levels) wherever the 4x-refined estimate of
        ``int P/Q`` over the cell differs from the coarse one by more than
        the cell's share of ``rtol`` times the total, or where a sample has
        ``Q <= small_q * max|Q|``.  Needed for integrable singularities and
        sharp peaks of ``P/Q``.
    return_info : bool
        Also return a :class:`MomentMapInfo`.
    """
    p, q = _coeffs(p, q, tableau)
    A = tableau.values
    P, Q = A @ p, A @ q
    r, zz = _ratio(P, Q, tableau.weights)
    info = MomentMapInfo(zero_over_zero=zz)
    if not refine:
        out = A.T @ (tableau.weights * r)
    else:
        if tableau.cell_widths is None:
            raise ConfigurationError("singular-aware refinement requires the midpoint rule")
        out = _refined_moments(p, q, tableau, r, rtol, max_depth, small_q, max_points, info)
    return (out, info) if return_info else out


def _refined_moments(p, q, tableau, r0, rtol, max_depth, small_q, max_points, info):
    basis = tableau.basis
    d = tableau.domain.dim
    k = 4 ** d
    grid = (np.arange(4) + 0.5) / 4.0 - 0.5
    offsets = np.stack(np.meshgrid(*([grid] * d), indexing="ij"), -1).reshape(-1, d)

    q_scale = float(np.max(np.abs(tableau.all_values @ q)))
    w_total = float(np.sum(tableau.weights))
    total = float(np.sum(np.abs(tableau.weights * r0)))
    if total == 0.0:
        return np.zeros(tableau.n)

    centers = tableau.nodes
    weights = tableau.weights
    dens = r0
    vals = tableau.values
    qmin = tableau.values @ q
    width = np.asarray(tableau.cell_widths, dtype=float)
    out = np.zeros(tableau.n)

    for depth in range(max_depth + 1):
        if centers.shape[0] == 0:
            break
        info.depth_reached = depth
        if depth == max_depth:
            out += vals.T @ (weights * dens)
            break
        m = centers.shape[0]
        sub = (centers[:, None, :] + offsets[None, :, :] * width).reshape(-1, d)
        A = basis.values(sub)
        Ps, Qs = A @ p, A @ q
        rs, zz = _ratio(Ps, Qs)
        info.zero_over_zero += zz
        sub_w = np.repeat(weights / k, k)
        fine = (rs.reshape(m, k) * (weights / k)[:, None]).sum(axis=1)
        coarse = weights * dens
        err = np.abs(fine - coarse)
        tol_cell = rtol * total * weights / w_total
        sample_min = np.minimum(Qs.reshape(m, k).min(axis=1), qmin)
        has_mass = (Ps.reshape(m, k) != 0).any(axis=1)
        refine = (err > tol_cell) | (has_mass & (sample_min <= small_q * q_scale))

        budget = max_points // k
        if np.count_nonzero(refine) > budget:
            info.truncated = True
            keep = np.argsort(-np.where(refine, err, -1.0), kind="stable")[:budget]
            mask = np.zeros(m, dtype=bool)
            mask[keep] = True
            refine &= mask

        accept = np.repeat(~refine, k)
        out += A[accept].T @ (sub_w[accept] * rs[accept])
        info.refined_cells += int(np.count_nonzero(refine))

        keep_sub = np.repeat(refine, k)
        centers = sub[keep_sub]
        weights = sub_w[keep_sub]
        dens = rs[keep_sub]
        vals = A[keep_sub]
        qmin = Qs[keep_sub]
        width = width / 4.0
    return out


def objective(c, p, q, tableau: GridTableau) -> ObjectiveReport:
    """Dual functional ``J(q) = <c, q> - int_K P log Q`` with derivatives.

    The gradient is ``c - f^p(q)`` and the Hessian is
    ``int alpha alpha' P/Q^2``.
    """
    n = tableau.n
    c = as_vector(c, n, "c")
    p, q = _coeffs(p, q, tableau)
    A, w = tableau.values, tableau.weights
    P, Q = A @ p, A @ q
    active = P != 0
    if np.any(Q[active] <= 0):
        return ObjectiveReport(np.inf)
    r = np.zeros_like(P)
    r[active] = P[active] / Q[active]
    value = float(c @ q - w[active] @ (P[active] * np.log(Q[active])))
    gradient = c - A.T @ (w * r)
    s = np.zeros_like(P)
    s[active] = r[active] / Q[active]
    hessian = (A * (w * s)[:, None]).T @ A
    return ObjectiveReport(value, gradient, 0.5 * (hessian + hessian.T))


def hessian_only(p, q, tableau: GridTableau) -> np.ndarray:
    """``int_K alpha alpha' P/Q^2 dx``, the negated Jacobian of the moment map."""
    p, q = _coeffs(p, q, tableau)
    if not np.any(p):
        raise ConfigurationError("p must be nonzero")
    A, w = tableau.values, tableau.weights
    P, Q = A @ p, A @ q
    r, _ = _ratio(P, Q, w)
    s = np.zeros_like(r)
    nz = r != 0
    s[nz] = r[nz] / Q[nz]
    H = (A * (w * s)[:, None]).T @ A
    return 0.5 * (H + H.T)


def _inverse_integral(basis, q, resolution, slab_points=2_000_000):
    """Midpoint estimate of ``int_K 1/Q`` assembled slab by slab."""
    domain = basis.domain
    axes = []
    for (a, b), m in zip(domain.bounds, resolution):
        h = (b - a) / m
        axes.append((a + h * (np.arange(m) + 0.5), h))
    cell = float(np.prod([h for _, h in axes]))
    if domain.normalize:
        cell /= domain.volume
    rest = [ax for ax, _ in axes[1:]]
    if rest:
        tail = np.stack(np.meshgrid(*rest, indexing="ij"), -1).reshape(-1, len(rest))
    else:
        tail = np.zeros((1, 0))
    per_slab = max(1, slab_points // tail.shape[0])
    first = axes[0][0]
    total = 0.0
    for start in range(0, first.shape[0], per_slab):
        x0 = first[start:start + per_slab]
        pts = np.column_stack([np.repeat(x0, tail.shape[0]), np.tile(tail, (x0.shape[0], 1))])
        Q = basis.values(pts) @ q
        if np.any(Q <= 0):
            return np.inf
        total += float(np.sum(1.0 / Q))
    return total * cell


def divergence_diagnostic(q, tableau: GridTableau, refinements=2, growth=1.5, stable=0.01):
    """Probe whether ``int_K 1/Q dx`` is infinite by doubling the resolution.

    Returns a :class:`DivergenceReport` whose verdict is ``"divergent"``
    when every doubling grows the estimate by at least ``growth``,
    ``"convergent"`` when the last two estimates agree within ``stable``
    (relative), and ``"inconclusive"`` otherwise.
    """
    q = as_vector(q, tableau.n, "q")
    if refinements < 1:
        raise ConfigurationError("divergence_diagnostic needs at least one refinement")
    Q = tableau.all_values @ q
    if Q.min() < -1e-9 * max(1.0, np.abs(Q).max()):
        raise ConfigurationError("q is not in the closed polynomial cone (Q < 0 on the grid)")
    base = np.array(tableau.resolution)
    estimates, resolutions = [], []
    for r in range(refinements + 1):
        res = tuple(int(m) for m in base * 2 ** r)
        estimates.append(_inverse_integral(tableau.basis, q, res))
        resolutions.append(list(res))
    if any(not np.isfinite(e) for e in estimates):
        verdict = "divergent"
    else:
        ratios = [b / a for a, b in zip(estimates[:-1], estimates[1:])]
        if all(g >= growth for g in ratios):
            verdict = "divergent"
        elif abs(estimates[-1] - estimates[-2]) <= stable * abs(estimates[-1]):
            verdict = "convergent"
        else:
            verdict = "inconclusive"
    return DivergenceReport(verdict, estimates, resolutions)


def refined_tableau(tableau: GridTableau, factor=2) -> GridTableau:
    """Same basis and rule at ``factor`` times the resolution."""
    return build_tableau(tableau.basis, tuple(m * factor for m in tableau.resolution), tableau.rule)
