"""KL objectives for single Gaussians and mixtures against a target measure.

For nu = N(m, Sigma) and target exp(-V1/eps - V2)/Z the divergence splits as

    KL(nu || mu_eps) = (1/eps) E[V1] + E[V2]
                       - (1/2) log((2 pi)^d det Sigma) - d/2 + log Z,

and for a mixture the Gaussian entropy term is replaced by the mixture
entropy integral E[log rho].  Expectations are estimated either by tensor
Gauss-Hermite (deterministic, exact on quadratics) or by Monte Carlo with a
reported standard error.  log Z is always supplied by the caller: Laplace
for speed, the Simpson grid oracle for exactness.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .gaussian import LOG_2PI, GaussianParams, MixtureParams
from .measure import MeasureFamily, TargetMeasure
from .potentials import Potential
from .quadrature import gaussian_expectation_nodes

GAUSS_HERMITE = "gauss-hermite"
MONTE_CARLO = "monte-carlo"


@dataclass(frozen=True)
class EstimatorConfig:
    method: str = GAUSS_HERMITE
    gh_order: int = 20
    mc_samples: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.method not in (GAUSS_HERMITE, MONTE_CARLO):
            raise ValueError(f"unknown estimator method {self.method!r}")
        if self.gh_order < 2:
            raise ValueError("Gauss-Hermite order must be >= 2")
        if self.mc_samples < 2:
            raise ValueError("Monte-Carlo sample count must be >= 2")


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    refine_error: float = 0.0


@dataclass(frozen=True)
class KLEstimate:
    """A KL value with its term-by-term breakdown.

    ``detail`` always sums to ``value`` (to 1e-12); constraint-violating
    mixture parameters yield the distinguished value math.inf.
    """

    value: float
    stderr: float
    method: str
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        object.__setattr__(self, "stderr", float(self.stderr))
        object.__setattr__(
            self, "detail", {k: float(v) for k, v in self.detail.items()}
        )

    def check_sum(self, tol: float = 1e-12) -> bool:
        if not math.isfinite(self.value):
            return True
        total = sum(self.detail.values())
        return abs(total - self.value) <= tol * max(1.0, abs(self.value))

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "method": self.method,
            "detail": dict(self.detail),
        }

    def to_json_str(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def expectation_under_gaussian(
    f: Potential, g: GaussianParams, est: EstimatorConfig | None = None
) -> Estimate:
    """E^g[f] by tensor Gauss-Hermite or Monte Carlo.

    Gauss-Hermite reports stderr 0 together with an order-refinement error
    estimate (difference against the half-order rule); Monte Carlo reports
    the usual standard error of the mean.
    """
    est = est or EstimatorConfig()
    if f.dim != g.dim:
        raise ValueError("potential and Gaussian dimension mismatch")
    if est.method == GAUSS_HERMITE:
        x, w, _ = gaussian_expectation_nodes(g.mean, g.chol, est.gh_order)
        value = float(np.dot(w, f.value(x)))
        half = max(2, est.gh_order // 2)
        xh, wh, _ = gaussian_expectation_nodes(g.mean, g.chol, half)
        coarse = float(np.dot(wh, f.value(xh)))
        return Estimate(value=value, stderr=0.0, refine_error=abs(value - coarse))
    rng = np.random.default_rng(est.seed)
    samples = g.sample(est.mc_samples, rng)
    vals = f.value(samples)
    return Estimate(
        value=float(np.mean(vals)),
        stderr=float(np.std(vals, ddof=1) / math.sqrt(est.mc_samples)),
    )


def gaussian_entropy_term(g: GaussianParams) -> float:
    """int nu log nu for nu = N(m, Sigma): -(1/2) log((2 pi)^d det Sigma) - d/2."""
    return -0.5 * (g.dim * LOG_2PI + g.log_det_cov) - 0.5 * g.dim


def _potential_terms(mu: TargetMeasure, g: GaussianParams, est: EstimatorConfig):
    """(E[V1]/eps, E[V2], stderr of their sum).

    Monte-Carlo mode evaluates both potentials on one sample set (common
    random numbers), so the standard error is taken of the pointwise
    combination rather than of independent estimates.
    """
    if est.method == GAUSS_HERMITE:
        e1 = expectation_under_gaussian(mu.v1, g, est)
        e2 = expectation_under_gaussian(mu.v2, g, est)
        return e1.value / mu.epsilon, e2.value, 0.0
    rng = np.random.default_rng(est.seed)
    x = g.sample(est.mc_samples, rng)
    v1 = mu.v1.value(x)
    v2 = mu.v2.value(x)
    combined = v1 / mu.epsilon + v2
    stderr = float(np.std(combined, ddof=1) / math.sqrt(est.mc_samples))
    return float(np.mean(v1)) / mu.epsilon, float(np.mean(v2)), stderr


def kl_single(
    mu: TargetMeasure,
    g: GaussianParams,
    log_z: float,
    est: EstimatorConfig | None = None,
) -> KLEstimate:
    """KL(N(m, Sigma) || mu) with externally supplied log Z."""
    est = est or EstimatorConfig()
    if g.dim != mu.dim:
        raise ValueError("Gaussian and measure dimension mismatch")
    v1_term, v2_term, stderr = _potential_terms(mu, g, est)
    detail = {
        "v1_term": v1_term,
        "v2_term": v2_term,
        "entropy_term": gaussian_entropy_term(g),
        "log_z": float(log_z),
    }
    return KLEstimate(
        value=sum(detail.values()), stderr=stderr, method=est.method, detail=detail
    )


def f_eps(
    family: MeasureFamily,
    epsilon: float,
    m,
    sigma,
    log_z: float,
    est: EstimatorConfig | None = None,
) -> KLEstimate:
    """The rescaled single-Gaussian objective: KL(N(m, eps*Sigma) || mu_eps)."""
    g = GaussianParams.from_covariance(m, np.asarray(sigma, dtype=float)).scaled(
        epsilon
    )
    return kl_single(family.at(epsilon), g, log_z, est)


def _stratum_sizes(weights: np.ndarray, total: int) -> np.ndarray:
    """Exact strata proportional to the weights (largest-remainder rounding)."""
    raw = weights * total
    sizes = np.floor(raw).astype(int)
    remainder = total - int(np.sum(sizes))
    if remainder > 0:
        order = np.argsort(-(raw - sizes), kind="stable")
        sizes[order[:remainder]] += 1
    sizes[(weights > 0) & (sizes == 0)] = 1
    return sizes


def mixture_entropy(
    mix: MixtureParams, est: EstimatorConfig | None = None
) -> Estimate:
    """E^nu[log rho] = int rho log rho for the mixture density rho.

    Monte-Carlo mode stratifies exactly proportionally to the weights and
    reports a standard error; Gauss-Hermite mode integrates log rho under
    each component (deterministic, stderr 0).
    """
    est = est or EstimatorConfig()
    if est.method == GAUSS_HERMITE:
        value = 0.0
        coarse = 0.0
        for comp, alpha in zip(mix.components, mix.weights):
            x, w, _ = gaussian_expectation_nodes(comp.mean, comp.chol, est.gh_order)
            value += alpha * float(np.dot(w, mix.log_density(x)))
            half = max(2, est.gh_order // 2)
            xh, wh, _ = gaussian_expectation_nodes(comp.mean, comp.chol, half)
            coarse += alpha * float(np.dot(wh, mix.log_density(xh)))
        return Estimate(value=value, stderr=0.0, refine_error=abs(value - coarse))
    rng = np.random.default_rng(est.seed)
    sizes = _stratum_sizes(mix.weights, est.mc_samples)
    value = 0.0
    var = 0.0
    for comp, alpha, n_i in zip(mix.components, mix.weights, sizes):
        if n_i == 0:
            continue
        x = comp.sample(int(n_i), rng)
        logr = mix.log_density(x)
        value += alpha * float(np.mean(logr))
        var += alpha**2 * float(np.var(logr, ddof=1)) / n_i
    return Estimate(value=value, stderr=math.sqrt(var))


def entropy_split(mix: MixtureParams) -> float:
    """Separated-mode surrogate for the mixture entropy integral.

    sum_i alpha^i * (int rho^i log rho^i + log alpha^i); exact up to an
    exponentially small cross term once the component means are far apart,
    and a lower bound for the true integral in general.
    """
    total = 0.0
    for comp, alpha in zip(mix.components, mix.weights):
        if alpha == 0.0:
            continue
        total += alpha * (gaussian_entropy_term(comp) + math.log(alpha))
    return total


def g_eps(
    family: MeasureFamily,
    epsilon: float,
    mix: MixtureParams,
    log_z: float,
    est: EstimatorConfig | None = None,
    entropy_est: EstimatorConfig | None = None,
) -> KLEstimate:
    """The mixture objective KL(sum_i alpha^i N(m^i, Sigma_full^i) || mu_eps).

    The mixture is passed with full (already eps-scaled) component
    covariances.  Parameters outside the constrained family (weight floor
    xi1, separation xi2) receive the distinguished value +inf rather than an
    exception.  Expectations follow ``est``; the entropy term follows
    ``entropy_est`` (default: Monte Carlo, the estimator the entropy integral
    needs once the density has no polynomial structure).
    """
    est = est or EstimatorConfig()
    entropy_est = entropy_est or EstimatorConfig(
        method=MONTE_CARLO, mc_samples=est.mc_samples, seed=est.seed
    )
    if mix.dim != family.dim:
        raise ValueError("mixture and family dimension mismatch")
    if not mix.satisfies_constraints():
        return KLEstimate(
            value=math.inf, stderr=0.0, method=est.method, detail={}
        )
    mu = family.at(epsilon)
    v1_term = 0.0
    v2_term = 0.0
    stderr_sq = 0.0
    for comp, alpha in zip(mix.components, mix.weights):
        t1, t2, se = _potential_terms(mu, comp, est)
        v1_term += alpha * t1
        v2_term += alpha * t2
        stderr_sq += (alpha * se) ** 2
    ent = mixture_entropy(mix, entropy_est)
    detail = {
        "entropy_term": ent.value,
        "v1_term": v1_term,
        "v2_term": v2_term,
        "log_z": float(log_z),
    }
    return KLEstimate(
        value=sum(detail.values()),
        stderr=math.sqrt(stderr_sq + ent.stderr**2),
        method=est.method,
        detail=detail,
    )
