"""Domain boxes, basis families and grid tableaux.

A :class:`BasisSystem` couples an axis-aligned box with ``n`` real basis
functions.  :func:`build_tableau` discretizes the box into quadrature nodes
(plus a lattice of *probe* nodes on cell vertices, boundary included) and
stores the basis values at both.  Every integral in the package is a
weighted sum over a tableau.
"""

from dataclasses import dataclass
from fractions import Fraction
from itertools import product
from typing import Callable, Optional, Sequence

import numpy as np

from ._validation import as_points
from .exceptions import ConfigurationError, DomainError

RULES = ("midpoint", "gauss-legendre")


@dataclass(frozen=True)
class DomainBox:
    """Axis-aligned compact box ``K = [a_1, b_1] x ... x [a_d, b_d]``.

    With ``normalize=True`` the reference measure is ``dx / vol(K)``.
    """

    bounds: tuple
    normalize: bool = False

    def __post_init__(self):
        bounds = tuple((float(a), float(b)) for a, b in self.bounds)
        if len(bounds) < 1:
            raise ConfigurationError("domain needs at least one axis")
        for a, b in bounds:
            if not (np.isfinite(a) and np.isfinite(b) and b > a):
                raise ConfigurationError(f"invalid interval [{a}, {b}]")
        object.__setattr__(self, "bounds", bounds)

    @property
    def dim(self) -> int:
        return len(self.bounds)

    @property
    def lower(self) -> np.ndarray:
        return np.array([a for a, _ in self.bounds])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b for _, b in self.bounds])

    @property
    def lengths(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def measure_factor(self) -> float:
        """Total mass of the reference measure on K."""
        return 1.0 if self.normalize else self.volume

    def contains(self, points, atol=0.0) -> np.ndarray:
        pts = as_points(points, self.dim)
        return np.all((pts >= self.lower - atol) & (pts <= self.upper + atol), axis=1)

    def clip(self, points) -> np.ndarray:
        return np.clip(points, self.lower, self.upper)


# ---------------------------------------------------------------------------
# basis families


class CosineTensorFamily:
    """``cos(k . x)`` for each multi-index ``k``."""

    name = "cosine-tensor"

    def __init__(self, indices):
        ind = np.atleast_2d(np.asarray(indices, dtype=float))
        if ind.ndim != 2 or ind.shape[0] == 0:
            raise ConfigurationError("cosine-tensor family needs a non-empty multi-index list")
        self.indices = ind
        self.dim = ind.shape[1]
        self.n = ind.shape[0]

    def __call__(self, points):
        return np.cos(points @ self.indices.T)

    def describe(self):
        return {"family": self.name, "indices": self.indices.astype(int).tolist()}


class MonomialFamily:
    """``x^gamma = prod_i x_i^{gamma_i}`` for each multi-index ``gamma``."""

    name = "monomial"

    def __init__(self, indices):
        ind = np.atleast_2d(np.asarray(indices, dtype=int))
        if ind.ndim != 2 or ind.shape[0] == 0:
            raise ConfigurationError("monomial family needs a non-empty multi-index list")
        if np.any(ind < 0):
            raise ConfigurationError("monomial exponents must be nonnegative")
        self.indices = ind
        self.dim = ind.shape[1]
        self.n = ind.shape[0]

    def __call__(self, points):
        out = np.ones((points.shape[0], self.n))
        for k, gamma in enumerate(self.indices):
            for axis, g in enumerate(gamma):
                if g:
                    out[:, k] *= points[:, axis] ** g
        return out

    def describe(self):
        return {"family": self.name, "indices": self.indices.tolist()}


class FractionalPowerFamily:
    """One-dimensional powers ``x^e`` with rational exponents ``e = r/s``.

    For ``x < 0`` the real branch ``sign(x)^r |x|^e`` is used, which requires
    an odd denominator ``s``.
    """

    name = "fractional-power-1d"

    def __init__(self, exponents):
        exps = [Fraction(str(e)).limit_denominator(10**6) for e in exponents]
        if not exps:
            raise ConfigurationError("fractional-power family needs at least one exponent")
        if any(e < 0 for e in exps):
            raise ConfigurationError("fractional-power exponents must be nonnegative")
        self.exponents = exps
        self.dim = 1
        self.n = len(exps)

    def check_domain(self, domain):
        if domain.lower[0] < 0:
            bad = [str(e) for e in self.exponents if e.denominator % 2 == 0]
            if bad:
                raise ConfigurationError(
                    f"exponents {bad} have even denominators and no real branch for x < 0"
                )

    def __call__(self, points):
        x = points[:, 0]
        ax = np.abs(x)
        out = np.empty((x.shape[0], self.n))
        for k, e in enumerate(self.exponents):
            if e == 0:
                out[:, k] = 1.0
                continue
            col = ax ** float(e)
            if e.numerator % 2 == 1:
                col = np.where(x < 0, -col, col)
            out[:, k] = col
        return out

    def describe(self):
        return {"family": self.name, "exponents": [str(e) for e in self.exponents]}


def _oscillating_decay(points):
    # (1, (1-x)(cos(x/(1-x)) + 1)), continuous on [0, 1] with value 0 at x = 1
    x = points[:, 0]
    one_minus = 1.0 - x
    with np.errstate(divide="ignore", invalid="ignore"):
        second = one_minus * (np.cos(x / one_minus) + 1.0)
    second = np.where(one_minus <= 0, 0.0, second)
    return np.column_stack([np.ones_like(x), second])


TABULATED_GENERATORS = {
    "oscillating-decay": (1, 2, _oscillating_decay),
}


class TabulatedFamily:
    """Basis values supplied per node.

    Either a lookup table (``points``, ``values``) whose entries must cover
    every node a tableau asks for, or a named generator from
    :data:`TABULATED_GENERATORS` that produces the table on demand.
    """

    name = "tabulated"

    def __init__(self, points=None, values=None, generator: Optional[str] = None,
                 func: Optional[Callable] = None, dim=None, n=None):
        self.generator = generator
        self._table = None
        if generator is not None:
            if generator not in TABULATED_GENERATORS:
                raise ConfigurationError(f"unknown tabulated generator {generator!r}")
            self.dim, self.n, self._func = TABULATED_GENERATORS[generator]
        elif func is not None:
            if dim is None or n is None:
                raise ConfigurationError("a callable table needs explicit dim and n")
            self.dim, self.n, self._func = int(dim), int(n), func
        else:
            if points is None or values is None:
                raise ConfigurationError("tabulated family needs points and values")
            vals = np.atleast_2d(np.asarray(values, dtype=float))
            pts = np.asarray(points, dtype=float)
            pts = pts.reshape(vals.shape[0], -1)
            self.dim, self.n = pts.shape[1], vals.shape[1]
            self._func = None
            self._table = {self._key(p): v for p, v in zip(pts, vals)}

    @staticmethod
    def _key(point):
        return tuple(np.round(np.asarray(point, dtype=float), 12).tolist())

    def __call__(self, points):
        if self._func is not None:
            return np.asarray(self._func(points), dtype=float)
        out = np.empty((points.shape[0], self.n))
        for j, p in enumerate(points):
            row = self._table.get(self._key(p))
            if row is None:
                raise ConfigurationError(
                    f"tabulated basis has no entry for node {p.tolist()} "
                    f"(table holds {len(self._table)} nodes)"
                )
            out[j] = row
        return out

    def describe(self):
        if self.generator is not None:
            return {"family": self.name, "generator": self.generator}
        return {"family": self.name, "entries": None if self._table is None else len(self._table)}


FAMILIES = {
    "cosine-tensor": CosineTensorFamily,
    "monomial": MonomialFamily,
    "fractional-power-1d": FractionalPowerFamily,
    "tabulated": TabulatedFamily,
}


def _rank_check_resolution(dim):
    per_axis = max(4, min(64, int(round(2.0e5 ** (1.0 / dim)))))
    return (per_axis,) * dim


class BasisSystem:
    """A domain box together with ``n`` linearly independent basis functions.

    Parameters
    ----------
    domain : DomainBox
    family : basis family instance (see :data:`FAMILIES`)
    check_rank : bool, default True
        Verify numerical linear independence on a moderate grid and reject
        dependent systems.
    rank_tol : float
        Relative singular-value threshold for the rank check.
    """

    def __init__(self, domain: DomainBox, family, check_rank=True, rank_tol=1e-10):
        if family.dim != domain.dim:
            raise ConfigurationError(
                f"basis family is {family.dim}-dimensional but domain is {domain.dim}-dimensional"
            )
        if hasattr(family, "check_domain"):
            family.check_domain(domain)
        self.domain = domain
        self.family = family
        if check_rank and not isinstance(family, TabulatedFamily):
            tab = build_tableau(self, _rank_check_resolution(domain.dim))
            rank, _ = tableau_rank(tab, rank_tol)
            if rank < self.n:
                raise ConfigurationError(
                    f"basis functions are linearly dependent on K (numerical rank {rank} < n={self.n})"
                )

    @property
    def n(self) -> int:
        return self.family.n

    @property
    def dim(self) -> int:
        return self.domain.dim

    def values(self, points) -> np.ndarray:
        """Basis values at ``points`` without the domain check."""
        return self.family(np.asarray(points, dtype=float))

    def polynomial(self, coeffs, points) -> np.ndarray:
        return self.values(points) @ np.asarray(coeffs, dtype=float)

    def describe(self) -> dict:
        out = dict(self.family.describe())
        out["bounds"] = [list(b) for b in self.domain.bounds]
        out["normalize"] = self.domain.normalize
        return out

    def __repr__(self):
        return f"BasisSystem({self.family.name}, n={self.n}, d={self.dim})"


def evaluate_basis(basis: BasisSystem, point) -> np.ndarray:
    """Return ``(alpha_1(x), ..., alpha_n(x))`` for one point ``x`` in K."""
    pts = as_points(point, basis.dim, "point")
    if pts.shape[0] != 1:
        raise ConfigurationError("evaluate_basis takes a single point")
    if not basis.domain.contains(pts)[0]:
        raise DomainError(f"point {pts[0].tolist()} lies outside {basis.domain.bounds}")
    return basis.values(pts)[0]


# ---------------------------------------------------------------------------
# tableaux


@dataclass(frozen=True, eq=False)
class GridTableau:
    """Quadrature nodes, weights and basis values on a box.

    ``values[j, k]`` is ``alpha_k(nodes[j])``.  The probe lattice holds the
    cell vertices (``resolution + 1`` points per axis, box faces included)
    and is used wherever nonnegativity of a polynomial on K is enforced.
    """

    basis: BasisSystem
    rule: str
    resolution: tuple
    nodes: np.ndarray
    weights: np.ndarray
    values: np.ndarray
    cell_widths: Optional[np.ndarray]
    probe_nodes: np.ndarray
    probe_values: np.ndarray
    probe_shape: tuple

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def size(self) -> int:
        return self.nodes.shape[0]

    @property
    def domain(self) -> DomainBox:
        return self.basis.domain

    @property
    def all_nodes(self) -> np.ndarray:
        return np.vstack([self.nodes, self.probe_nodes])

    @property
    def all_values(self) -> np.ndarray:
        return np.vstack([self.values, self.probe_values])

    def integrate(self, f_values) -> float:
        """Weighted sum of node values."""
        return float(self.weights @ np.asarray(f_values, dtype=float))

    def basis_integral(self) -> np.ndarray:
        """``int_K alpha dx`` on this grid."""
        return self.weights @ self.values

    def summary(self) -> dict:
        return {
            "rule": self.rule,
            "resolution": list(self.resolution),
            "nodes": int(self.size),
            "probe_nodes": int(self.probe_nodes.shape[0]),
        }


def _freeze(*arrays):
    for a in arrays:
        if a is not None:
            a.setflags(write=False)


def _tensor(axes):
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def _normalize_resolution(resolution, dim):
    if np.isscalar(resolution):
        res = (int(resolution),) * dim
    else:
        res = tuple(int(r) for r in resolution)
    if len(res) == 1 and dim > 1:
        res = res * dim
    if len(res) != dim:
        raise ConfigurationError(f"resolution needs {dim} entries, got {len(res)}")
    if any(r < 2 for r in res):
        raise ConfigurationError(f"every axis needs at least 2 nodes, got {res}")
    return res


def build_tableau(basis: BasisSystem, resolution, rule: str = "midpoint") -> GridTableau:
    """Discretize K with a tensor midpoint or Gauss-Legendre rule.

    Weights are positive and sum to the box's measure factor.
    """
    if rule not in RULES:
        raise ConfigurationError(f"unknown quadrature rule {rule!r}; expected one of {RULES}")
    domain = basis.domain
    res = _normalize_resolution(resolution, domain.dim)
    scale = 1.0 / domain.volume if domain.normalize else 1.0

    node_axes, weight_axes = [], []
    for (a, b), m in zip(domain.bounds, res):
        if rule == "midpoint":
            h = (b - a) / m
            node_axes.append(a + h * (np.arange(m) + 0.5))
            weight_axes.append(np.full(m, h))
        else:
            t, w = np.polynomial.legendre.leggauss(m)
            node_axes.append(0.5 * (b - a) * t + 0.5 * (a + b))
            weight_axes.append(0.5 * (b - a) * w)
    nodes = _tensor(node_axes)
    weights = _tensor(weight_axes).prod(axis=1) * scale
    probe_axes = [np.linspace(a, b, m + 1) for (a, b), m in zip(domain.bounds, res)]
    probe_nodes = _tensor(probe_axes)
    widths = domain.lengths / np.array(res) if rule == "midpoint" else None

    values = basis.values(nodes)
    probe_values = basis.values(probe_nodes)
    for arr, label in ((values, "node"), (probe_values, "probe")):
        expected = (nodes.shape[0] if label == "node" else probe_nodes.shape[0], basis.n)
        if arr.shape != expected:
            raise ConfigurationError(
                f"basis produced {arr.shape} {label} values, expected {expected}"
            )
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError(f"basis is not finite at every {label} point")
    _freeze(nodes, weights, values, probe_nodes, probe_values, widths)
    return GridTableau(
        basis=basis,
        rule=rule,
        resolution=res,
        nodes=nodes,
        weights=weights,
        values=values,
        cell_widths=widths,
        probe_nodes=probe_nodes,
        probe_values=probe_values,
        probe_shape=tuple(m + 1 for m in res),
    )


def tableau_rank(tableau: GridTableau, tol: float = 1e-10):
    """Numerical rank and condition number of the node value matrix."""
    s = np.linalg.svd(tableau.values, compute_uv=False)
    if s.size == 0 or s[0] == 0:
        return 0, np.inf
    rank = int(np.sum(s > tol * s[0]))
    cond = float(s[0] / s[-1]) if s[-1] > 0 else np.inf
    return rank, cond


# ---------------------------------------------------------------------------
# construction from plain mappings (config files, estimator params)


def make_basis(spec: dict, check_rank=True) -> BasisSystem:
    """Build a :class:`BasisSystem` from a mapping such as a config block."""
    from .config import parse_number

    try:
        bounds = [[parse_number(v) for v in pair] for pair in spec["bounds"]]
        family_name = spec["family"]
    except KeyError as exc:
        raise ConfigurationError(f"basis block is missing key {exc.args[0]!r}") from None
    domain = DomainBox(tuple(tuple(b) for b in bounds), bool(spec.get("normalize", False)))
    if family_name in ("cosine-tensor", "monomial"):
        if "indices" not in spec:
            raise ConfigurationError(f"{family_name} basis needs 'indices'")
        family = FAMILIES[family_name](spec["indices"])
    elif family_name == "fractional-power-1d":
        if "exponents" not in spec:
            raise ConfigurationError("fractional-power-1d basis needs 'exponents'")
        family = FractionalPowerFamily(spec["exponents"])
    elif family_name == "tabulated":
        family = TabulatedFamily(
            points=spec.get("points"), values=spec.get("values"), generator=spec.get("generator")
        )
    else:
        raise ConfigurationError(
            f"unknown basis family {family_name!r}; expected one of {sorted(FAMILIES)}"
        )
    return BasisSystem(domain, family, check_rank=check_rank)


def multi_indices(dim: int, degree: int, total=True) -> list:
    """All multi-indices with total (or per-axis) degree at most ``degree``."""
    out = []
    for gamma in product(range(degree + 1), repeat=dim):
        if not total or sum(gamma) <= degree:
            out.append(list(gamma))
    out.sort(key=lambda g: (sum(g), [-x for x in g]))
    return out


def cosine_basis(n: int, normalize=True, check_rank=True) -> BasisSystem:
    """``{1, cos x, ..., cos (n-1) x}`` on ``[-pi, pi]``."""
    return BasisSystem(
        DomainBox(((-np.pi, np.pi),), normalize),
        CosineTensorFamily([[k] for k in range(n)]),
        check_rank=check_rank,
    )


def bilinear_unit_square(check_rank=True) -> BasisSystem:
    """``(1, x1, x2, x1 x2)`` on ``[0, 1]^2``."""
    return BasisSystem(
        DomainBox(((0.0, 1.0), (0.0, 1.0))),
        MonomialFamily([[0, 0], [1, 0], [0, 1], [1, 1]]),
        check_rank=check_rank,
    )


def points_in(basis: BasisSystem, points: Sequence) -> np.ndarray:
    pts = as_points(points, basis.dim)
    inside = basis.domain.contains(pts)
    if not np.all(inside):
        bad = pts[~inside][0]
        raise DomainError(f"point {bad.tolist()} lies outside {basis.domain.bounds}")
    return pts
