"""Primal entropy-like functional, duality identity and KL-like divergence.

Throughout, ``x log x`` is taken as 0 at ``x = 0``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._validation import as_vector
from .domain import GridTableau
from .exceptions import ConfigurationError
from .quadrature import objective
from .recovery import AtomicMeasure


@dataclass
class DensityOnGrid:
    """Absolutely continuous part on the nodes plus an optional atomic part."""

    values: np.ndarray
    singular: Optional[AtomicMeasure] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1 or not np.all(np.isfinite(self.values)):
            raise ConfigurationError("density values must be a finite 1-d array")
        if np.any(self.values < 0):
            raise ConfigurationError("density values must be nonnegative")

    def total_mass(self, tableau: GridTableau) -> float:
        extra = 0.0 if self.singular is None else self.singular.total_mass
        return tableau.integrate(self.values) + extra

    def moments(self, tableau: GridTableau) -> np.ndarray:
        out = tableau.values.T @ (tableau.weights * self.values)
        if self.singular is not None:
            out = out + self.singular.moments(tableau.basis)
        return out


def density_from_solution(p, q_hat, tableau: GridTableau, singular=None) -> DensityOnGrid:
    """``P / Q_hat`` on the nodes; 0/0 nodes get density 0."""
    p = as_vector(p, tableau.n, "p")
    q_hat = as_vector(q_hat, tableau.n, "q_hat")
    P = tableau.values @ p
    Q = tableau.values @ q_hat
    phi = np.zeros_like(P)
    nz = P != 0
    if np.any(Q[nz] <= 0):
        raise ConfigurationError("Q_hat is not positive where P is nonzero")
    phi[nz] = P[nz] / Q[nz]
    return DensityOnGrid(phi, singular)


def _check_len(density, tableau):
    if density.values.shape[0] != tableau.size:
        raise ConfigurationError(
            f"density has {density.values.shape[0]} values for {tableau.size} nodes"
        )


def primal_objective(p, density: DensityOnGrid, tableau: GridTableau) -> float:
    """``sum_j w_j P_j log Phi_j``; ``-inf`` if ``Phi`` vanishes where ``P`` weighs.

    The singular part does not enter.
    """
    p = as_vector(p, tableau.n, "p")
    _check_len(density, tableau)
    wP = tableau.weights * (tableau.values @ p)
    act = wP != 0
    phi = density.values[act]
    if np.any(phi <= 0):
        return -np.inf
    return float(wP[act] @ np.log(phi))


def entropy_constant(p, tableau: GridTableau) -> float:
    """``int P (log P - 1)`` with the ``0 log 0 = 0`` convention."""
    p = as_vector(p, tableau.n, "p")
    P = tableau.values @ p
    act = P > 0
    w = tableau.weights[act]
    return float(w @ (P[act] * (np.log(P[act]) - 1.0)))


def duality_table(c, p, q_hat, tableau: GridTableau) -> dict:
    """The three terms of the primal/dual identity and their mismatch."""
    c = as_vector(c, tableau.n, "c")
    density = density_from_solution(p, q_hat, tableau)
    primal = primal_objective(p, density, tableau)
    dual = objective(c, p, q_hat, tableau).value
    const = entropy_constant(p, tableau)
    return {"primal": primal, "dual": dual, "entropy_constant": const,
            "gap": abs(primal - dual - const)}


def duality_gap(c, p, outcome, tableau: GridTableau) -> float:
    """``|I_p(P/Q_hat) - J(q_hat) - int P (log P - 1)|`` for a solver outcome."""
    return duality_table(c, p, outcome.q_hat, tableau)["gap"]


def kl_divergence(p, density: DensityOnGrid, tableau: GridTableau) -> float:
    """``sum_j w_j P_j log(P_j / Phi_j)``; may be negative for unnormalized ``Phi``."""
    p = as_vector(p, tableau.n, "p")
    _check_len(density, tableau)
    P = tableau.values @ p
    act = (P * tableau.weights) != 0
    if np.any(P[act] < 0):
        raise ConfigurationError("P must be nonnegative on the nodes")
    phi = density.values[act]
    if np.any(phi <= 0):
        return np.inf
    return float(tableau.weights[act] @ (P[act] * np.log(P[act] / phi)))


def primal_residual(c, density: DensityOnGrid, tableau: GridTableau) -> float:
    """``|| int alpha Phi + sum_j a_j alpha(x_j) - c ||``."""
    c = as_vector(c, tableau.n, "c")
    return float(np.linalg.norm(density.moments(tableau) - c))
