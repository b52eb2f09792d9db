"""Repeated self-distillation for fixed-design linear regression.

Exact excess-risk formulas, optimal imitation parameters, validation-based
tuning and the experiment drivers built on them.
"""

from .errors import (
    ConfigError,
    DataError,
    DegenerateParametrizationError,
    InfeasibleError,
    InputError,
    SchemaError,
)
from .estimators import (
    EstimatorWeights,
    SdParams,
    XiBar,
    fit_full_two_step,
    fit_ridge,
    fit_sd_preconditioner,
    fit_sd_recursive,
    full_two_step_equivalent,
    xi_to_xibar,
    xibar_preimage,
    xibar_to_xi,
)
from .risk import (
    QuadraticRisk,
    RiskReport,
    degenerate_case_bounds,
    excess_risk_closed,
    excess_risk_monte_carlo,
    lower_bound,
    optimal_preconditioner,
    quadratic_coefficients,
    ridge_lambda_star,
    ridge_risk,
    strict_dominance_condition,
)
from .solver import (
    best_xibar,
    best_xibar_path,
    build_system,
    default_lambda_grid,
    min_excess_risk,
    search_lambda_achieving_bound,
    solve_xibar_argmin,
    solve_xibar_exact,
)
from .spectral import ProblemInstance, Spectrum, decompose, make_synthetic, theta_components
from .tuner import ProbeDesign, TunedResult, fit_quadratic_from_evals, probe_design, tune

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "DegenerateParametrizationError",
    "EstimatorWeights",
    "InfeasibleError",
    "InputError",
    "ProbeDesign",
    "ProblemInstance",
    "QuadraticRisk",
    "RiskReport",
    "SchemaError",
    "SdParams",
    "Spectrum",
    "TunedResult",
    "XiBar",
    "best_xibar",
    "best_xibar_path",
    "build_system",
    "decompose",
    "default_lambda_grid",
    "degenerate_case_bounds",
    "excess_risk_closed",
    "excess_risk_monte_carlo",
    "fit_full_two_step",
    "fit_quadratic_from_evals",
    "fit_ridge",
    "fit_sd_preconditioner",
    "fit_sd_recursive",
    "full_two_step_equivalent",
    "lower_bound",
    "make_synthetic",
    "min_excess_risk",
    "optimal_preconditioner",
    "probe_design",
    "quadratic_coefficients",
    "ridge_lambda_star",
    "ridge_risk",
    "search_lambda_achieving_bound",
    "solve_xibar_argmin",
    "solve_xibar_exact",
    "strict_dominance_condition",
    "theta_components",
    "tune",
    "xi_to_xibar",
    "xibar_preimage",
    "xibar_to_xi",
]
