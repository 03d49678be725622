"""Multivariate Poisson counts coupled through comonotonic shock vectors.

Exact joint probabilities, implied covariance structure, simulation,
four estimation methods with bootstrap uncertainty, a marginal Poisson
diagnostic, and utilities for reducing daily series to yearly event
counts.
"""

from .estimate import (
    BootstrapResult,
    DiagnosticError,
    EstimationError,
    FitResult,
    GofResult,
    METHODS,
    UnconstrainedPoint,
    bootstrap,
    fit,
    fit_2s,
    fit_ml,
    fit_mm,
    fit_sq,
    from_unconstrained,
    nelder_mead,
    parameter_names,
    parameter_vector,
    poisson_gof,
    to_unconstrained,
)
from .exceed import ExceedanceConfig, ExceedanceResult, count_exceedances
from .model import (
    ModelParams,
    ParameterError,
    bivariate_pmf,
    bivariate_pmf_box,
    check_counts,
    joint_cdf,
    joint_cdf_box,
    joint_pmf,
    joint_pmf_box,
    log_likelihood,
    pairwise_log_likelihood,
    params_from_dict,
    sample,
    validate,
)
from .moments import PairCovTarget, cor_matrix, cov_matrix, max_cor, max_cov, pair_cov, solve_weight
from .poisson import (
    comono_pmf,
    comono_sample,
    comono_support,
    pois_cdf,
    pois_cdf_array,
    pois_pmf,
    pois_quantile,
    pois_quantile_vec,
)
from .scenarios import SCENARIOS, ScenarioSpec, StudyResult, run_study, scenario_params

__version__ = "0.1.0"
