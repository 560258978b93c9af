"""Age and trait structured renewal populations in the small-mutation limit."""

from .coefficients import (
    AssumptionBounds,
    CoefficientSet,
    GridSpec,
    InitialCondition,
    MutationKernel,
    compactified_coefficients,
    constant_coefficients,
    kernel_exp_moment,
    tabulated_coefficients,
    validate_assumptions,
)
from .corrector import check_gamma_bounds, solve_gamma
from .direct import DirectSolver, PopulationState, recover_corrector, step_m
from .dynamics import Trajectory, canonical_step, compare_routes, hessian_at, integrate_canonical
from .eigen import (
    EigenBundle,
    EigenSolver,
    compute_F,
    compute_lambda,
    compute_Phi,
    compute_Q,
    concavity_margin,
    lambda_derivatives,
)
from .errors import RenewalHJError
from .grid import TraitGrid
from .harness import RunReport, run_scenario
from .hj import HJSolver, HJState, eta_eps, step_U_eps, step_U_limit, sup_and_argmax
from .scenario import ScenarioConfig, load_scenario

__version__ = "0.1.0"

__all__ = [
    "AssumptionBounds", "CoefficientSet", "DirectSolver", "EigenBundle", "EigenSolver",
    "GridSpec", "HJSolver", "HJState", "InitialCondition", "MutationKernel", "PopulationState",
    "RenewalHJError", "RunReport", "ScenarioConfig", "TraitGrid", "Trajectory",
    "canonical_step", "check_gamma_bounds", "compactified_coefficients", "compare_routes",
    "compute_F", "compute_Phi", "compute_Q", "compute_lambda", "concavity_margin",
    "constant_coefficients", "eta_eps", "hessian_at", "integrate_canonical", "kernel_exp_moment",
    "lambda_derivatives", "load_scenario", "recover_corrector", "run_scenario", "solve_gamma",
    "step_U_eps", "step_U_limit", "step_m", "sup_and_argmax", "tabulated_coefficients",
    "validate_assumptions",
]
