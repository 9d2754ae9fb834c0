"""Estimation and small-error asymptotics for proportional-error regression.

Models of the form ``y = f(x, theta) * (1 + sigma * eps)`` fitted by four
estimators (maximum likelihood, quasi likelihood, weighted and data-weighted
least squares), with closed-form small-``sigma`` bias and covariance
formulae, two-curve equivalent-dose estimation, and a seeded Monte Carlo
harness for validating the formulae.
"""

from .asymptotics import (
    BiasReport,
    CovarianceReport,
    FactorizationCheck,
    LimitDistribution,
    bias_order2,
    check_theta1_factorization,
    cov_ml_exact,
    cov_ml_full,
    cov_ml_unreduced,
    cov_order2,
    cov_ql_sandwich,
    limit_distribution,
    ml_expected_information,
    ml_score_covariance,
)
from .equivalent_dose import (
    DoseEstimate,
    PartialBleachModel,
    TwoCurveFitResult,
    beta1_from_gamma,
    fit_two_curves,
    gamma_bias_se,
    gamma_gradient,
    gamma_hessian,
    partial_bleach_model,
    solve_gamma,
)
from .estimators import (
    METHODS,
    FitOptions,
    FitResult,
    equation_residual,
    estimate_sigma_ml,
    estimate_sigma_unbiased,
    fit,
    fit_dwls,
    fit_ml,
    fit_ql,
    fit_wls,
)
from .exceptions import (
    ConfigError,
    DegenerateError,
    DerivativeNoiseWarning,
    DomainError,
    ModeError,
    MultipleRootWarning,
    NoBracketError,
    NonFiniteError,
    PropfitError,
    Rejected,
    SingularError,
    TangencyError,
    ZeroMeanError,
    ZeroResponseError,
)
from .jacobian import JacobianBundle, build_jacobian_bundle
from .models import (
    Dataset,
    FdCheckReport,
    ModelFunction,
    constant_model,
    exponential_decay_model,
    fd_check,
    get_model,
    register_model,
    saturating_exponential_model,
    scaled_shape_model,
)
from .simulation import (
    SimDesign,
    SimSummary,
    compare_bias_table,
    default_partial_bleach_design,
    generate_dataset,
    replicate_stream,
    run_study,
)

__version__ = "0.1.0"

__all__ = [
    "BiasReport",
    "ConfigError",
    "CovarianceReport",
    "Dataset",
    "DegenerateError",
    "DerivativeNoiseWarning",
    "DomainError",
    "DoseEstimate",
    "FactorizationCheck",
    "FdCheckReport",
    "FitOptions",
    "FitResult",
    "JacobianBundle",
    "LimitDistribution",
    "METHODS",
    "ModeError",
    "ModelFunction",
    "MultipleRootWarning",
    "NoBracketError",
    "NonFiniteError",
    "PartialBleachModel",
    "PropfitError",
    "Rejected",
    "SimDesign",
    "SimSummary",
    "SingularError",
    "TangencyError",
    "TwoCurveFitResult",
    "ZeroMeanError",
    "ZeroResponseError",
    "beta1_from_gamma",
    "bias_order2",
    "build_jacobian_bundle",
    "check_theta1_factorization",
    "compare_bias_table",
    "constant_model",
    "cov_ml_exact",
    "cov_ml_full",
    "cov_ml_unreduced",
    "cov_order2",
    "cov_ql_sandwich",
    "default_partial_bleach_design",
    "equation_residual",
    "estimate_sigma_ml",
    "estimate_sigma_unbiased",
    "exponential_decay_model",
    "fd_check",
    "fit",
    "fit_dwls",
    "fit_ml",
    "fit_ql",
    "fit_two_curves",
    "fit_wls",
    "gamma_bias_se",
    "gamma_gradient",
    "gamma_hessian",
    "generate_dataset",
    "get_model",
    "limit_distribution",
    "ml_expected_information",
    "ml_score_covariance",
    "partial_bleach_model",
    "register_model",
    "replicate_stream",
    "run_study",
    "saturating_exponential_model",
    "scaled_shape_model",
    "solve_gamma",
]
