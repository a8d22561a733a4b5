"""Upwind finite-difference scheme for finite-horizon HJB equations."""

from .analysis import (
    ConvergenceReport,
    EpiDiagnostic,
    Region,
    consistency_residual,
    convergence_study_lqr,
    epi_diagnostic,
    fit_order,
    grid_norm,
    self_convergence_study_2d,
)
from .conservation import (
    DerivativeField,
    correspondence_error,
    evolve_derivative,
    numerical_flux_plus,
    total_variation,
)
from .errors import CflViolation, InvalidArgument, NumericalFailure, OutOfRange, UpwindError
from .grid import GridSpec, ScalarField, extend_piecewise_constant, grid_from_steps, make_grid
from .minimize import MinimizerOptions, MinimizerStats
from .problems import (
    ControlProblem,
    InputSet,
    ObstacleParams,
    Rollout,
    exact_lqr_input,
    exact_lqr_value,
    lqr_problem,
    obstacle_problem,
    rollout,
    separable_problem,
)
from .upwind import CflStatus, SolveResult, check_cfl, minimize_input, solve, step_backward, upwind_hamiltonian
from .verify import PropertyResult, SuiteReport, run_suite

__version__ = "0.1.0"

__all__ = [
    "CflStatus",
    "CflViolation",
    "ControlProblem",
    "ConvergenceReport",
    "DerivativeField",
    "EpiDiagnostic",
    "GridSpec",
    "InputSet",
    "InvalidArgument",
    "MinimizerOptions",
    "MinimizerStats",
    "NumericalFailure",
    "ObstacleParams",
    "OutOfRange",
    "PropertyResult",
    "Region",
    "Rollout",
    "ScalarField",
    "SolveResult",
    "SuiteReport",
    "UpwindError",
    "check_cfl",
    "consistency_residual",
    "convergence_study_lqr",
    "correspondence_error",
    "epi_diagnostic",
    "evolve_derivative",
    "exact_lqr_input",
    "exact_lqr_value",
    "extend_piecewise_constant",
    "fit_order",
    "grid_from_steps",
    "grid_norm",
    "lqr_problem",
    "make_grid",
    "minimize_input",
    "numerical_flux_plus",
    "obstacle_problem",
    "rollout",
    "run_suite",
    "self_convergence_study_2d",
    "separable_problem",
    "solve",
    "step_backward",
    "total_variation",
    "upwind_hamiltonian",
]
