"""Best-KL Gaussian and Gaussian-mixture approximation of concentrating measures.

The library approximates target densities proportional to
exp(-V1(x)/eps - V2(x)) by single Gaussians and constrained Gaussian
mixtures under the reverse Kullback-Leibler divergence, verifies the
small-eps limits of the optimal parameters and values against their closed
forms, and runs the Bernstein-von Mises rate experiment for a discretized
elliptic Bayesian inverse problem.
"""

from .gamma import (
    RateFit,
    SweepRecord,
    SweepResult,
    f_limit,
    f_limit_split,
    fit_rate,
    g_limit,
    limit_minimizer_single,
    sweep,
)
from .gaussian import (
    GaussianParams,
    MixtureParams,
    kl_categorical,
    kl_gaussian_gaussian,
    sample,
)
from .inverse import (
    BvMConfig,
    EllipticProblem,
    asymptotic_normality_check,
    bvm_experiment,
    forward,
    jacobian,
    log_z_expectation_check,
    posterior,
    posterior_family,
)
from .measure import (
    GridSpec,
    MeasureFamily,
    ModeSet,
    MultistartConfig,
    TargetMeasure,
    builtin_problem,
    find_modes,
    laplace_normalization,
    load_problem,
    quadrature_normalization,
    unnormalized_log_density,
)
from .objective import (
    EstimatorConfig,
    KLEstimate,
    entropy_split,
    expectation_under_gaussian,
    f_eps,
    g_eps,
    kl_single,
    mixture_entropy,
)
from .optimizer import (
    OptimizerConfig,
    OptimResult,
    minimize_mixture,
    minimize_single,
)
from .potentials import Potential, check_derivatives

__version__ = "0.1.0"

__all__ = [
    "BvMConfig",
    "EllipticProblem",
    "EstimatorConfig",
    "GaussianParams",
    "GridSpec",
    "KLEstimate",
    "MeasureFamily",
    "MixtureParams",
    "ModeSet",
    "MultistartConfig",
    "OptimResult",
    "OptimizerConfig",
    "Potential",
    "RateFit",
    "SweepRecord",
    "SweepResult",
    "TargetMeasure",
    "asymptotic_normality_check",
    "builtin_problem",
    "bvm_experiment",
    "check_derivatives",
    "entropy_split",
    "expectation_under_gaussian",
    "f_eps",
    "f_limit",
    "f_limit_split",
    "find_modes",
    "fit_rate",
    "forward",
    "g_eps",
    "g_limit",
    "jacobian",
    "kl_categorical",
    "kl_gaussian_gaussian",
    "kl_single",
    "laplace_normalization",
    "limit_minimizer_single",
    "load_problem",
    "log_z_expectation_check",
    "minimize_mixture",
    "minimize_single",
    "mixture_entropy",
    "posterior",
    "posterior_family",
    "quadrature_normalization",
    "sample",
    "sweep",
    "unnormalized_log_density",
]
