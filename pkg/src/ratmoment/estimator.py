"""Estimator-style wrapper: fit moments, predict the rational density."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import as_vector
from .domain import BasisSystem, build_tableau, make_basis, points_in
from .duality import duality_table
from .exceptions import ConfigurationError, RecoveryError
from .recovery import recover_atoms
from .solver import SolverOptions, solve_dual


class RationalMomentEstimator(BaseEstimator):
    """Rational density ``P / Q_hat`` (plus atoms) matching given moments.

    Parameters
    ----------
    basis : BasisSystem or dict
        Basis on K, or a mapping accepted by :func:`~ratmoment.domain.make_basis`.
    p : array_like, optional
        Numerator coefficients; defaults to the first unit vector, which is
        the maximum-entropy choice when the first basis function is 1.
    resolution : int or tuple
    rule : {"midpoint", "gauss-legendre"}
    max_iters, grad_tol, boundary_tol :
        Forwarded to :class:`~ratmoment.solver.SolverOptions`.
    recover : bool
        Recover the atomic part when the minimizer lies on the boundary.
    """

    def __init__(self, basis=None, p=None, resolution=512, rule="midpoint", max_iters=200,
                 grad_tol=None, boundary_tol=1e-5, recover=True):
        self.basis = basis
        self.p = p
        self.resolution = resolution
        self.rule = rule
        self.max_iters = max_iters
        self.grad_tol = grad_tol
        self.boundary_tol = boundary_tol
        self.recover = recover

    def _basis(self) -> BasisSystem:
        if isinstance(self.basis, BasisSystem):
            return self.basis
        if isinstance(self.basis, dict):
            return make_basis(self.basis)
        raise ConfigurationError("basis must be a BasisSystem or a basis mapping")

    def fit(self, X, y=None):
        """Fit to the moment vector ``X`` (shape ``(n,)`` or ``(1, n)``)."""
        basis = self._basis()
        c = as_vector(np.ravel(np.asarray(X, dtype=float)), basis.n, "moments")
        p = np.eye(basis.n)[0] if self.p is None else as_vector(self.p, basis.n, "p")
        self.tableau_ = build_tableau(basis, self.resolution, self.rule)
        opts = SolverOptions(max_iters=self.max_iters, grad_tol=self.grad_tol,
                             boundary_tol=self.boundary_tol)
        out = solve_dual(c, p, self.tableau_, opts)
        self.basis_ = basis
        self.p_ = p
        self.moments_ = c
        self.outcome_ = out
        self.q_hat_ = out.q_hat
        self.c_hat_ = out.c_hat
        self.boundary_ = out.boundary
        self.n_iter_ = out.iterations
        self.atoms_ = None
        if self.recover and out.boundary:
            try:
                self.atoms_ = recover_atoms(out.c_hat, out.zero_set, basis)
            except RecoveryError:
                self.atoms_ = None
        return self

    def predict(self, X):
        """Density ``P / Q_hat`` at the points ``X`` (shape ``(m, d)``)."""
        check_is_fitted(self, "q_hat_")
        pts = points_in(self.basis_, X)
        A = self.basis_.values(pts)
        P, Q = A @ self.p_, A @ self.q_hat_
        out = np.zeros_like(P)
        nz = P != 0
        with np.errstate(divide="ignore"):
            out[nz] = np.where(Q[nz] > 0, P[nz] / np.where(Q[nz] > 0, Q[nz], 1.0), np.inf)
        return out

    def transform(self, X):
        """Columns ``P(x), Q_hat(x), P/Q_hat`` at the points ``X``."""
        check_is_fitted(self, "q_hat_")
        pts = points_in(self.basis_, X)
        A = self.basis_.values(pts)
        return np.column_stack([A @ self.p_, A @ self.q_hat_, self.predict(pts)])

    def score(self, X, y=None):
        """Negative duality-identity mismatch on the fitted grid (0 is best)."""
        check_is_fitted(self, "q_hat_")
        return -duality_table(self.moments_, self.p_, self.q_hat_, self.tableau_)["gap"]
