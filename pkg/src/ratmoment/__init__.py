"""Rational positive solutions of multidimensional moment problems."""

__version__ = "0.1.0"

from .cones import classify_moment, dual_lambda, polynomial_cone_check, toeplitz_cross_check
from .domain import (BasisSystem, DomainBox, GridTableau, bilinear_unit_square, build_tableau,
                     cosine_basis, evaluate_basis, make_basis)
from .duality import (DensityOnGrid, density_from_solution, duality_gap, kl_divergence,
                      primal_objective)
from .estimator import RationalMomentEstimator
from .exceptions import (ConfigurationError, DomainError, IllConditionedError,
                         InfeasibleDenominatorError, MomentError, NotInDualConeError, RangeError,
                         RecoveryError, UnsupportedBasisError)
from .quadrature import divergence_diagnostic, hessian_only, moment_map, objective
from .recovery import AtomicMeasure, ZeroSet, discrete_measure, find_zero_set, recover_atoms
from .solver import SolveOutcome, SolverOptions, continuity_probe, kkt_verify, roundtrip, solve_dual

__all__ = [
    "AtomicMeasure", "BasisSystem", "ConfigurationError", "DensityOnGrid", "DomainBox",
    "DomainError", "GridTableau", "IllConditionedError", "InfeasibleDenominatorError",
    "MomentError", "NotInDualConeError", "RangeError", "RationalMomentEstimator",
    "RecoveryError", "SolveOutcome", "SolverOptions", "UnsupportedBasisError", "ZeroSet",
    "bilinear_unit_square", "build_tableau", "classify_moment", "continuity_probe",
    "cosine_basis", "density_from_solution", "discrete_measure", "divergence_diagnostic",
    "dual_lambda", "duality_gap", "evaluate_basis", "find_zero_set", "hessian_only",
    "kkt_verify", "kl_divergence", "make_basis", "moment_map", "objective",
    "polynomial_cone_check", "primal_objective", "recover_atoms", "roundtrip", "solve_dual",
    "toeplitz_cross_check",
]
