"""Membership tests for the polynomial cone and its dual cone.

The dual-cone test solves the linear program

    minimize <c, p>  subject to  <c0, p> = 1,  P(x) >= 0 on K

whose value ``V`` is positive, zero or negative exactly when ``c`` lies in
the interior, on the boundary, or outside the dual cone.  The semi-infinite
constraint is imposed at the tableau nodes and probe lattice, then tightened
by constraint exchange on a 4x-refined lattice.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import toeplitz
from scipy.optimize import linprog

from ._validation import as_vector
from .domain import CosineTensorFamily, GridTableau, _tensor
from .exceptions import ConfigurationError, RangeError, UnsupportedBasisError

_HIGHS = {"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10}


@dataclass
class PolynomialVerdict:
    region: str
    min_value: float
    argmin: np.ndarray
    tol: float


@dataclass
class ConeVerdict:
    """Outcome of the dual-cone linear program.

    ``region`` is decided by comparing ``V`` with ``tol``; inside the band
    ``|V| <= tol`` the boundary and a nearby interior/exterior point cannot
    be told apart numerically.
    """

    region: str
    V: float
    witness_p: Optional[np.ndarray]
    tol: float
    lambda_hat: Optional[float] = None
    rounds: int = 0

    def as_dict(self) -> dict:
        return {
            "region": self.region,
            "V": _finite_or_str(self.V),
            "witness_p": None if self.witness_p is None else self.witness_p.tolist(),
            "tol": self.tol,
            "band": f"|V| <= {self.tol:.3e} reported as boundary",
            "lambda_hat": self.lambda_hat,
            "exchange_rounds": self.rounds,
        }


def _finite_or_str(x):
    return float(x) if np.isfinite(x) else ("-inf" if x < 0 else "inf")


def _local_grid(center, width, domain, per_axis=9):
    t = np.linspace(-1.0, 1.0, per_axis)
    pts = center + _tensor([t * w for w in width])
    return domain.clip(pts)


def refine_minimum(coeffs, basis, start, width, depth=6, per_axis=9):
    """Shrink a local search box around ``start`` 4x per level.

    Returns the best point found and the polynomial value there.
    """
    best = np.asarray(start, dtype=float)
    best_val = float(basis.polynomial(coeffs, best[None])[0])
    w = np.asarray(width, dtype=float)
    for _ in range(depth):
        pts = _local_grid(best, w, basis.domain, per_axis)
        vals = basis.values(pts) @ coeffs
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best, best_val = pts[j], float(vals[j])
        w = w / 4.0
    return best, best_val


def _lattice_width(tableau):
    return tableau.domain.lengths / np.array(tableau.resolution)


def polynomial_cone_check(q, tableau: GridTableau, tol_rel=1e-9) -> PolynomialVerdict:
    """Classify ``q`` against the polynomial cone by minimizing Q on K.

    The grid minimum (nodes plus probe lattice) is refined locally before
    thresholding at ``tol_rel * max|Q|``.
    """
    q = as_vector(q, tableau.n, "q")
    pts = tableau.all_nodes
    Q = tableau.all_values @ q
    scale = float(np.max(np.abs(Q)))
    j = int(np.argmin(Q))
    x, qmin = refine_minimum(q, tableau.basis, pts[j], _lattice_width(tableau))
    tol = tol_rel * scale
    if qmin > tol:
        region = "interior"
    elif qmin >= -tol:
        region = "boundary"
    else:
        region = "exterior"
    return PolynomialVerdict(region, float(qmin), x, tol)


def _solve_lp(c, c0, rows):
    kw = dict(A_ub=-rows, b_ub=np.zeros(rows.shape[0]), A_eq=c0[None, :], b_eq=np.array([1.0]),
              bounds=[(None, None)] * c.shape[0])
    res = linprog(c, method="highs-ds", options=_HIGHS, **kw)
    if res.status == 4:
        # numerical trouble in the dual simplex; the interior-point variant usually copes
        res = linprog(c, method="highs-ipm", options=_HIGHS, **kw)
    return res


def _refined_lattice(tableau, factor=4):
    axes = [np.linspace(a, b, factor * m + 1)
            for (a, b), m in zip(tableau.domain.bounds, tableau.resolution)]
    per_axis = [a.shape[0] for a in axes]
    if np.prod(per_axis) > 4_000_000:
        axes = [np.linspace(a, b, 2 * m + 1)
                for (a, b), m in zip(tableau.domain.bounds, tableau.resolution)]
    return _tensor(axes)


def default_c0(tableau: GridTableau) -> np.ndarray:
    """``int_K alpha dx``, strictly inside the dual cone.

    Entries at quadrature round-off level are set to zero.
    """
    c0 = np.array(tableau.basis_integral())
    c0[np.abs(c0) <= 1e-13 * np.max(np.abs(c0))] = 0.0
    return c0


def classify_moment(c, tableau: GridTableau, c0=None, tol=None, max_rounds=10,
                    check_c0=True) -> ConeVerdict:
    """Locate ``c`` relative to the dual cone via the normalized LP.

    Parameters
    ----------
    c : array_like, shape (n,)
    c0 : array_like, optional
        Normalizing vector strictly inside the dual cone; defaults to
        ``int_K alpha dx``.
    tol : float, optional
        Boundary band for ``V``; defaults to ``1e-8 * ||c||``.
    max_rounds : int
        Constraint-exchange rounds on the refined lattice.
    """
    n = tableau.n
    c = as_vector(c, n, "c")
    c0 = default_c0(tableau) if c0 is None else as_vector(c0, n, "c0")
    if tol is None:
        tol = 1e-8 * float(np.linalg.norm(c))
    rows = tableau.all_values
    if check_c0:
        # <c0, p> > 0 on the cone, normalized by the node sum of P
        pre = _solve_lp(c0, rows.mean(axis=0), rows)
        if pre.status != 0 or pre.fun <= 1e-12 * float(np.linalg.norm(c0)):
            raise ConfigurationError("c0 is not strictly inside the dual cone")

    fine = None
    rounds = 0
    while True:
        res = _solve_lp(c, c0, rows)
        if res.status == 3:
            return ConeVerdict("exterior", -np.inf, None, tol, rounds=rounds)
        if res.status == 2:
            raise ConfigurationError("dual-cone LP infeasible: c0 not admissible")
        if res.status != 0:
            raise ConfigurationError(f"dual-cone LP failed: {res.message}")
        p = res.x
        if rounds >= max_rounds:
            break
        if fine is None:
            fine = _refined_lattice(tableau)
            fine_vals = tableau.basis.values(fine)
        P = fine_vals @ p
        scale = float(np.max(np.abs(P))) or 1.0
        bad = np.flatnonzero(P < -1e-9 * scale)
        if bad.size == 0:
            break
        worst = bad[np.argsort(P[bad], kind="stable")[:200]]
        rows = np.vstack([rows, fine_vals[worst]])
        rounds += 1
    V = float(res.fun)
    if V > tol:
        region = "interior"
    elif V >= -tol:
        region = "boundary"
    else:
        region = "exterior"
    return ConeVerdict(region, V, p, tol, rounds=rounds)


def dual_lambda(c, tableau: GridTableau, c0=None, bracket=1e6, xtol=1e-10, max_iter=200):
    """``max lambda`` such that ``c - lambda c0`` is on the dual-cone boundary.

    Found by bisection on the sign of the LP value of ``c - lambda c0``.
    """
    n = tableau.n
    c = as_vector(c, n, "c")
    c0 = default_c0(tableau) if c0 is None else as_vector(c0, n, "c0")

    def value(lam):
        v = classify_moment(c - lam * c0, tableau, c0=c0, tol=0.0, check_c0=False)
        return v.V

    lo, hi = -1.0, 1.0
    while value(lo) <= 0:
        lo *= 2.0
        if lo < -bracket:
            raise RangeError("no lower bisection bracket within the search range")
    while value(hi) >= 0:
        hi *= 2.0
        if hi > bracket:
            raise RangeError("no upper bisection bracket within the search range")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        v = value(mid)
        if v == 0.0:
            return mid
        if v > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= xtol * (1.0 + abs(mid)):
            break
    return 0.5 * (lo + hi)


def toeplitz_cross_check(c, basis=None, rel_tol=1e-10) -> str:
    """Classical test for the cosine moment problem.

    The symmetric Toeplitz matrix with first row ``c`` is positive definite,
    singular positive semidefinite, or indefinite.
    """
    if basis is not None:
        fam = basis.family
        ok = (isinstance(fam, CosineTensorFamily) and fam.dim == 1
              and np.array_equal(fam.indices[:, 0], np.arange(fam.n)))
        if not ok:
            raise UnsupportedBasisError("Toeplitz test needs the 1-d cosine basis {cos kx, k=0..n-1}")
    c = as_vector(c, name="c")
    T = toeplitz(c)
    eig = np.linalg.eigvalsh(T)
    band = rel_tol * abs(np.trace(T))
    if eig[0] > band:
        return "positive-definite"
    if eig[0] >= -band:
        return "singular"
    return "indefinite"
