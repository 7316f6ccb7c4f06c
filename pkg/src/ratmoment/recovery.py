"""Zero sets of boundary denominators and atomic measures.

``find_zero_set`` locates where ``Q_hat`` vanishes, ``recover_atoms``
writes a residual ``c_hat`` as nonnegative combination of point masses on
those zeros, and ``discrete_measure`` builds a finitely supported measure
with given moments from an LP vertex.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.optimize import linprog, nnls

from ._validation import as_points, as_vector
from .cones import _HIGHS, _lattice_width, classify_moment, refine_minimum
from .domain import BasisSystem, GridTableau
from .exceptions import ConfigurationError, RecoveryError

UNIQUE = "unique"
NON_UNIQUE = "non-unique"
UNDETERMINED = "undetermined"


@dataclass
class ZeroSet:
    points: np.ndarray
    support_kind: str

    @classmethod
    def empty(cls, dim):
        return cls(np.zeros((0, dim)), "isolated-points")

    def __len__(self):
        return self.points.shape[0]

    def as_dict(self) -> dict:
        return {"support_kind": self.support_kind, "count": len(self),
                "points": self.points.tolist() if len(self) <= 64 else "omitted (> 64 points)"}


@dataclass
class AtomicMeasure:
    """Point masses ``sum_j a_j delta(x - x_j)``."""

    locations: np.ndarray
    masses: np.ndarray
    uniqueness: str
    support_kind: str
    residual: float = 0.0
    notes: list = field(default_factory=list)

    def __post_init__(self):
        if np.any(self.masses < 0):
            raise ValueError("atom masses must be nonnegative")

    def __len__(self):
        return self.masses.shape[0]

    @property
    def total_mass(self) -> float:
        return float(self.masses.sum())

    def moments(self, basis: BasisSystem) -> np.ndarray:
        if len(self) == 0:
            return np.zeros(basis.n)
        return basis.values(self.locations).T @ self.masses

    def atoms(self):
        return [(loc.copy(), float(m)) for loc, m in zip(self.locations, self.masses)]

    def as_dict(self) -> dict:
        return {
            "atoms": [{"location": loc.tolist(), "mass": float(m)}
                      for loc, m in zip(self.locations, self.masses)],
            "total_mass": self.total_mass,
            "uniqueness": self.uniqueness,
            "support_kind": self.support_kind,
            "residual": self.residual,
            "notes": list(self.notes),
        }

    def to_csv(self) -> str:
        d = self.locations.shape[1]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f"x{i + 1}" for i in range(d)] + ["mass"])
        for loc, m in zip(self.locations, self.masses):
            writer.writerow([repr(float(v)) for v in loc] + [repr(float(m))])
        return buf.getvalue()


def _merge(points, radius=1e-4):
    """Greedy clustering in lexicographic order; cluster centroid per group."""
    if points.shape[0] == 0:
        return points
    order = np.lexsort(points.T[::-1])
    pts = points[order]
    groups = []
    for x in pts:
        for g in groups:
            if np.max(np.abs(g[0] - x)) <= radius:
                g.append(x)
                break
        else:
            groups.append([x])
    out = np.array([np.mean(g, axis=0) for g in groups])
    return out[np.lexsort(out.T[::-1])]


def find_zero_set(q_hat, tableau: GridTableau, tau_b=1e-5) -> ZeroSet:
    """Near-zeros of ``Q_hat`` on K.

    Candidates are probe-lattice and node points with ``Q < tau_b max|Q|``.
    If they form a lattice-connected set of more than ``3n`` points the
    zero set is a sampled curve (or surface) and the candidates are
    returned as is; otherwise each connected component is refined to one
    local minimum and duplicates are merged.
    """
    q_hat = as_vector(q_hat, tableau.n, "q_hat")
    dim = tableau.domain.dim
    Qp = tableau.probe_values @ q_hat
    Qn = tableau.values @ q_hat
    scale = float(max(np.max(np.abs(Qp)), np.max(np.abs(Qn))))
    thresh = tau_b * scale
    lat = (Qp < thresh).reshape(tableau.probe_shape)
    if not lat.any() and not np.any(Qn < thresh):
        return ZeroSet.empty(dim)

    labels, count = ndimage.label(lat, structure=np.ones((3,) * dim))
    if count:
        sizes = np.bincount(labels.ravel())[1:]
        if sizes.max() > 3 * tableau.n:
            near = np.concatenate([tableau.probe_nodes[Qp < thresh], tableau.nodes[Qn < thresh]])
            return ZeroSet(near[np.lexsort(near.T[::-1])], "sampled-curve")

    # one start per lattice component, searched over the component's extent;
    # node candidates outside every component are refined on their own
    cell = _lattice_width(tableau)
    flat = labels.ravel()
    starts = []
    for k in range(1, count + 1):
        idx = np.flatnonzero(flat == k)
        pts = tableau.probe_nodes[idx]
        width = np.maximum(0.5 * np.ptp(pts, axis=0) + cell, cell)
        starts.append((pts[int(np.argmin(Qp[idx]))], width))
    covered = np.zeros(tableau.size, dtype=bool)
    for k in range(1, count + 1):
        pts = tableau.probe_nodes[flat == k]
        lo, hi = pts.min(axis=0) - cell, pts.max(axis=0) + cell
        covered |= np.all((tableau.nodes >= lo) & (tableau.nodes <= hi), axis=1)
    starts += [(x, cell) for x in tableau.nodes[(Qn < thresh) & ~covered]]
    refined = []
    for x, width in starts:
        y, val = refine_minimum(q_hat, tableau.basis, x, width)
        if val < thresh:
            refined.append(y)
    if not refined:
        return ZeroSet.empty(dim)
    return ZeroSet(_merge(np.array(refined)), "isolated-points")


def _full_column_rank(M, tol=1e-10):
    if M.size == 0:
        return True
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > tol * s[0])) == M.shape[1]


def _prune(locations, masses, cols):
    total = masses.sum()
    keep = masses > 1e-10 * total if total > 0 else np.zeros_like(masses, dtype=bool)
    return locations[keep], masses[keep], cols[:, keep]


def recover_atoms(c_hat, candidates, basis: BasisSystem, support_kind="isolated-points",
                  tol=None) -> AtomicMeasure:
    """Nonnegative least squares for ``c_hat = sum_j a_j alpha(x_j)``.

    Parameters
    ----------
    c_hat : array_like, shape (n,)
    candidates : array_like or ZeroSet
        Candidate atom locations; a :class:`ZeroSet` also supplies the
        support kind.
    tol : float, optional
        Residual tolerance, default ``1e-6 (1 + ||c_hat||)``.

    ``uniqueness`` is ``unique`` only for isolated zeros, at most ``n`` of
    them, with linearly independent basis values there.
    For sampled curves the least-squares solution is replaced by a
    minimum-total-mass LP vertex, an arbitrary but reproducible choice
    since the singular measure is then not unique.
    """
    c_hat = as_vector(c_hat, basis.n, "c_hat")
    if isinstance(candidates, ZeroSet):
        support_kind = candidates.support_kind
        candidates = candidates.points
    dim = basis.dim
    tol = 1e-6 * (1.0 + float(np.linalg.norm(c_hat))) if tol is None else tol
    if float(np.linalg.norm(c_hat)) <= 1e-10:
        return AtomicMeasure(np.zeros((0, dim)), np.zeros(0), UNIQUE, support_kind)
    cand = as_points(candidates, dim, "candidates")
    if cand.shape[0] == 0:
        raise RecoveryError("no candidate atom locations for a nonzero residual; "
                            "try a larger tau_b or a finer grid", residual=float(np.linalg.norm(c_hat)))
    cand = cand[np.lexsort(cand.T[::-1])]
    D = basis.values(cand).T
    a, _ = nnls(D, c_hat, maxiter=50 * D.shape[1])
    notes = []
    if support_kind == "sampled-curve":
        target = D @ a
        res = linprog(np.ones(D.shape[1]), A_eq=D, b_eq=target, bounds=(0, None),
                      method="highs-ds", options=_HIGHS)
        if res.status == 0:
            a = np.clip(res.x, 0.0, None)
            notes.append("curve-supported singular part: minimum-total-mass representative "
                         "(lexicographic candidate order); other measures give the same moments")
    residual = float(np.linalg.norm(c_hat - D @ a))
    if residual > tol:
        raise RecoveryError(
            f"atomic residual {residual:.3e} exceeds {tol:.3e}; adjust tau_b or the resolution",
            residual=residual,
        )
    loc, mass, cols = _prune(cand, a, D)
    if support_kind == "sampled-curve":
        uniq = NON_UNIQUE
    else:
        # independence is needed at every zero, not only at the active atoms
        full = _full_column_rank(cols) and _full_column_rank(D)
        uniq = UNIQUE if (full and D.shape[1] <= basis.n) else NON_UNIQUE
    return AtomicMeasure(loc, mass, uniq, support_kind, residual, notes)


def _caratheodory(D, a, tol=1e-12):
    """Move to a vertex by cancelling null-space directions of the support."""
    a = a.copy()
    while True:
        s = np.flatnonzero(a > 0)
        if s.size == 0:
            return a
        M = D[:, s]
        _, sv, vt = np.linalg.svd(M)
        rank = int(np.sum(sv > tol * sv[0])) if sv.size else 0
        if rank == s.size:
            return a
        v = vt[-1]
        if not np.any(v > 0):
            v = -v
        pos = np.flatnonzero(v > 0)
        ratios = a[s][pos] / v[pos]
        j = int(np.argmin(ratios))
        a[s] = a[s] - ratios[j] * v
        a[s[pos[j]]] = 0.0
        a = np.clip(a, 0.0, None)


def discrete_measure(c, tableau: GridTableau, tol=1e-8, region=None) -> AtomicMeasure:
    """Finitely supported measure with moments ``c`` supported on grid points.

    Solves ``min sum a_j`` subject to ``sum_j a_j alpha(x_j) = c``, ``a >= 0``
    over all nodes and probe points.  The LP vertex has at most ``n``
    atoms, and at most ``n - 1`` when ``c`` lies on the dual-cone boundary.
    """
    n = tableau.n
    c = as_vector(c, n, "c")
    if region is None:
        region = classify_moment(c, tableau).region
    if region == "exterior":
        raise ConfigurationError("c lies outside the dual cone; no positive measure exists")
    pts = tableau.all_nodes
    D = tableau.all_values.T
    res = linprog(np.ones(D.shape[1]), A_eq=D, b_eq=c, bounds=(0, None),
                  method="highs-ds", options=_HIGHS)
    if res.status != 0:
        raise ConfigurationError(
            f"no nonnegative combination of grid atoms matches c ({res.message}); "
            "c may be exterior or the grid too coarse"
        )
    a = np.clip(res.x, 0.0, None)
    a = _caratheodory(D, a)
    s = np.flatnonzero(a > 1e-14 * max(1.0, a.max()))
    polished, *_ = np.linalg.lstsq(D[:, s], c, rcond=None)
    if np.all(polished >= 0):
        a = np.zeros_like(a)
        a[s] = polished
    residual = float(np.linalg.norm(D @ a - c))
    if residual > tol * max(1.0, float(np.linalg.norm(c))):
        raise ConfigurationError(f"discrete measure residual {residual:.3e} exceeds tolerance")
    s = np.flatnonzero(a > 0)
    loc = pts[s]
    mass = a[s]
    order = np.lexsort(loc.T[::-1]) if loc.size else np.arange(0)
    loc, mass = loc[order], mass[order]
    limit = n - 1 if region == "boundary" else n
    if len(mass) > limit:
        raise RecoveryError(f"vertex solution has {len(mass)} atoms, more than {limit}",
                            residual=residual)
    uniq = NON_UNIQUE if region == "interior" else UNDETERMINED
    return AtomicMeasure(loc, mass, uniq, "isolated-points", residual)
