"""Bayesian inverse problem for a discretized 1-D elliptic equation.

The forward map solves -u'' + c(q) u = f on (0,1) with zero boundary values
on an M-point grid (h = 1/(M+1)), with coefficient c(q) = exp(q) entrywise
("exp" variant, globally identifiable) or c(q) = q^2 ("square" variant,
identifiable up to 2^M sign flips).  Observing y = G(q_truth) + sqrt(eps) *
eta yields a posterior of concentrating form with dominant potential
V1(q) = |y - G(q)|^2 / 2 and secondary potential the prior.

The module reproduces three statements numerically: asymptotic normality of
the posterior (mean -> truth, rescaled covariance -> (DG^T DG)^{-1}),
the expected-KL rate E_eta KL(best Gaussian || posterior) = O(eps) with its
Pinsker/total-variation consequence, and the expansion of E_eta log Z.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .gamma import RateFit, fit_rate
from .measure import (
    GridSpec,
    MeasureFamily,
    ModeSet,
    TargetMeasure,
    quadrature_normalization,
)
from .optimizer import OptimizerConfig, minimize_mixture, minimize_single
from .potentials import Potential, potential_from_spec, quadratic
from .quadrature import tv_distance_grid

VARIANTS = ("exp", "square")


@dataclass(frozen=True)
class EllipticProblem:
    """Discrete elliptic forward model on M interior grid points."""

    M: int
    f: np.ndarray
    variant: str

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("grid size M must be >= 1")
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        f = np.broadcast_to(np.asarray(self.f, dtype=float), (self.M,)).copy()
        if np.any(f <= 0):
            raise ValueError("source term f must be strictly positive")
        object.__setattr__(self, "f", f)

    @property
    def h(self) -> float:
        return 1.0 / (self.M + 1)

    @property
    def laplacian(self) -> np.ndarray:
        """Dense tridiagonal -Laplacian: 2/h^2 on, -1/h^2 off the diagonal."""
        h2 = self.h**2
        A = np.zeros((self.M, self.M))
        np.fill_diagonal(A, 2.0 / h2)
        idx = np.arange(self.M - 1)
        A[idx, idx + 1] = -1.0 / h2
        A[idx + 1, idx] = -1.0 / h2
        return A

    def coefficient(self, q):
        return np.exp(q) if self.variant == "exp" else q * q

    def coefficient_derivative(self, q):
        return np.exp(q) if self.variant == "exp" else 2.0 * q


def forward(p: EllipticProblem, q) -> np.ndarray:
    """u = (A + diag(c(q)))^(-1) f; batched over a leading axis of q."""
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    qs = q[None, :] if single else q
    n = qs.shape[0]
    mats = np.broadcast_to(p.laplacian, (n, p.M, p.M)).copy()
    idx = np.arange(p.M)
    mats[:, idx, idx] += p.coefficient(qs)
    u = np.linalg.solve(mats, np.broadcast_to(p.f, (n, p.M))[..., None])[..., 0]
    return u[0] if single else u


def jacobian(p: EllipticProblem, q) -> np.ndarray:
    """Derivative matrix of the forward map, batched over a leading axis.

    The true derivative is -(A+Q)^(-1) U Q' (differentiating the resolvent
    contributes the sign the finite-difference oracle confirms); Q' = Q for
    the exp variant and diag(2 q_k) for the square variant.  All downstream
    quantities use DG^T DG, so the sign never matters there.
    """
    q = np.asarray(q, dtype=float)
    single = q.ndim == 1
    qs = q[None, :] if single else q
    n = qs.shape[0]
    mats = np.broadcast_to(p.laplacian, (n, p.M, p.M)).copy()
    idx = np.arange(p.M)
    mats[:, idx, idx] += p.coefficient(qs)
    u = np.linalg.solve(mats, np.broadcast_to(p.f, (n, p.M))[..., None])[..., 0]
    rhs = np.zeros((n, p.M, p.M))
    rhs[:, idx, idx] = u * p.coefficient_derivative(qs)
    J = -np.linalg.solve(mats, rhs)
    return J[0] if single else J


def _forward_and_jacobian(p, qs):
    mats = np.broadcast_to(p.laplacian, (qs.shape[0], p.M, p.M)).copy()
    idx = np.arange(p.M)
    mats[:, idx, idx] += p.coefficient(qs)
    u = np.linalg.solve(mats, np.broadcast_to(p.f, (qs.shape[0], p.M))[..., None])[
        ..., 0
    ]
    rhs = np.zeros((qs.shape[0], p.M, p.M))
    rhs[:, idx, idx] = u * p.coefficient_derivative(qs)
    J = -np.linalg.solve(mats, rhs)
    return u, J


def second_derivative_tensor(p: EllipticProblem, q, h: float = 1e-5) -> np.ndarray:
    """T[i, k, j] = d^2 G_k / dq_i dq_j by central differences of the Jacobian."""
    q = np.asarray(q, dtype=float)
    step = h * (1.0 + np.linalg.norm(q))
    T = np.zeros((p.M, p.M, p.M))
    for i in range(p.M):
        e = np.zeros(p.M)
        e[i] = step
        T[i] = (jacobian(p, q + e) - jacobian(p, q - e)) / (2 * step)
    return T


def misfit_potential(
    p: EllipticProblem, y, gauss_newton: bool = False, name: str = ""
) -> Potential:
    """V1(q) = |y - G(q)|^2 / 2 with gradient and Hessian.

    The Hessian is J^T J plus the residual-weighted curvature of G (finite
    differences of the Jacobian); ``gauss_newton`` drops the curvature term,
    which is exact in the zero-residual limit the theorems use.
    """
    y = np.asarray(y, dtype=float)

    def value(x):
        r = y - forward(p, x)
        return 0.5 * np.sum(r * r, axis=1)

    def grad(x):
        u, J = _forward_and_jacobian(p, x)
        r = y - u
        return -np.einsum("nkj,nk->nj", J, r)

    def hess(x):
        out = np.empty((x.shape[0], p.M, p.M))
        for i, q in enumerate(x):
            J = jacobian(p, q)
            H = J.T @ J
            if not gauss_newton:
                r = y - forward(p, q)
                T = second_derivative_tensor(p, q)
                H = H - np.einsum("k,ikj->ij", r, T)
            out[i] = 0.5 * (H + H.T)
        return out

    return Potential(
        dim=p.M,
        value_fn=value,
        grad_fn=grad,
        hess_fn=hess,
        name=name or f"elliptic-{p.variant}-misfit",
        growth_bound=float(np.sum(p.f**2)),
        v1_family=True,
    )


def _posterior_box(p: EllipticProblem, truth):
    truth = np.asarray(truth, dtype=float)
    if p.variant == "square":
        r = np.abs(truth)
        return (-r - 2.0, r + 2.0)
    return (truth - 2.0, truth + 2.0)


def posterior_family(
    p: EllipticProblem,
    truth,
    eta,
    prior: Potential | None = None,
    gauss_newton: bool = False,
) -> MeasureFamily:
    """The eps-indexed posterior family for data y_eps = G(truth) + sqrt(eps) eta."""
    truth = np.asarray(truth, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if truth.shape != (p.M,) or eta.shape != (p.M,):
        raise ValueError("truth and eta must have length M")
    if p.variant == "square" and np.any(truth == 0):
        raise ValueError("square variant requires a truth without zero entries")
    prior = prior if prior is not None else quadratic(dim=p.M)
    if prior.dim != p.M:
        raise ValueError("prior dimension mismatch")
    g_truth = forward(p, truth)

    def v1_at(epsilon: float) -> Potential:
        y = g_truth + math.sqrt(epsilon) * eta
        return misfit_potential(p, y, gauss_newton=gauss_newton)

    return MeasureFamily(
        name=f"elliptic-{p.variant}",
        dim=p.M,
        v1_limit=misfit_potential(p, g_truth, gauss_newton=gauss_newton),
        v2=prior,
        v1_at=v1_at,
        default_box=_posterior_box(p, truth),
    )


def posterior(
    p: EllipticProblem, truth, eta, epsilon: float, prior: Potential | None = None
) -> TargetMeasure:
    """Posterior at a fixed noise scale: exp(-|y - G(x)|^2/(2 eps) - V0(x))."""
    return posterior_family(p, truth, eta, prior).at(epsilon)


def large_data_log_density(p: EllipticProblem, truth, etas, prior, x):
    """Unnormalized log posterior for N repeated observations (raw sum form)."""
    etas = np.atleast_2d(np.asarray(etas, dtype=float))
    prior = prior if prior is not None else quadratic(dim=p.M)
    from .potentials import as_points

    pts, single = as_points(x, p.M)
    g_truth = forward(p, truth)
    u = forward(p, pts)
    r = g_truth - u  # (n_pts, M)
    total = np.zeros(pts.shape[0])
    for eta_i in etas:
        total += 0.5 * np.sum((r + eta_i) ** 2, axis=1)
    out = -total - prior.value(pts)
    return float(out[0]) if single else out


def large_data_posterior(p: EllipticProblem, truth, etas, prior=None):
    """Completed-square equivalent of the repeated-observation posterior.

    Returns (measure, log_offset) with eps = 1/N and effective noise
    sqrt(N) * mean(etas); the raw-sum log density equals the measure's
    unnormalized log density plus ``log_offset`` pointwise.
    """
    etas = np.atleast_2d(np.asarray(etas, dtype=float))
    n_obs = etas.shape[0]
    eta_bar = np.mean(etas, axis=0)
    eps = 1.0 / n_obs
    measure = posterior(p, truth, math.sqrt(n_obs) * eta_bar, eps, prior)
    log_offset = 0.5 * n_obs * float(eta_bar @ eta_bar) - 0.5 * float(
        np.sum(etas * etas)
    )
    return measure, log_offset


# ---------------------------------------------------------------------------
# asymptotic normality
# ---------------------------------------------------------------------------


def limit_mode_set(p: EllipticProblem, truth, prior: Potential | None = None) -> ModeSet:
    """Zeros of the limit misfit with Gauss-Newton Hessians DG^T DG.

    One mode at the truth for the exp variant; all 2^M sign flips for the
    square variant.  The resulting Laplace weights are the predicted limit
    mixture weights |det DG|^{-1} e^{-V0} (normalized).
    """
    truth = np.asarray(truth, dtype=float)
    prior = prior if prior is not None else quadratic(dim=p.M)
    if p.variant == "exp":
        modes = truth[None, :]
    else:
        if np.any(truth == 0):
            raise ValueError("square variant requires a truth without zero entries")
        signs = np.array(
            [[1 if (i >> k) & 1 == 0 else -1 for k in range(p.M)] for i in range(2**p.M)]
        )
        modes = signs * np.abs(truth)[None, :]
        order = np.lexsort(modes.T[::-1])
        modes = modes[order]
    hessians = np.stack([jacobian(p, m).T @ jacobian(p, m) for m in modes])
    v2_values = np.array([prior.value(m) for m in modes])
    return ModeSet(modes=modes, hessians=hessians, v2_values=v2_values)


@dataclass
class NormalityRecord:
    epsilon: float
    mean_err: float
    cov_rel_err: float
    weight_dist: float | None
    value: float
    converged: bool


def asymptotic_normality_check(
    p: EllipticProblem,
    truth,
    eta,
    eps_list,
    cfg: OptimizerConfig | None = None,
    prior: Potential | None = None,
    xi: tuple = (0.05, 1.0),
) -> list:
    """Optimize the posterior along eps and compare against the limit laws.

    exp variant: single Gaussian against (truth, (DG^T DG)^{-1}); square
    variant: 2^M-component mixture against the sign-flip modes and the
    prior-weighted limit weights.
    """
    cfg = cfg or OptimizerConfig()
    prior = prior if prior is not None else quadratic(dim=p.M)
    family = posterior_family(p, truth, eta, prior)
    ms = limit_mode_set(p, truth, prior)
    limit_covs = np.stack([np.linalg.inv(H) for H in ms.hessians])
    records = []
    warm = None
    for eps in sorted(set(float(e) for e in eps_list), reverse=True):
        mu = family.at(eps)
        if p.variant == "exp":
            extra = [(warm.params.mean, warm.rescaled_covariances)] if warm else None
            res = minimize_single(mu, cfg, mode_set=ms, extra_starts=extra)
            mean_err = float(np.linalg.norm(res.params.mean - ms.modes[0]))
            cov = res.rescaled_covariances
            cov_rel = float(
                np.linalg.norm(cov - limit_covs[0]) / np.linalg.norm(limit_covs[0])
            )
            weight_dist = None
        else:
            n = ms.n
            extra = None
            if warm is not None:
                mix = warm.params
                extra = [
                    (
                        mix.weights,
                        mix.means,
                        [np.linalg.cholesky(c) for c in warm.rescaled_covariances],
                    )
                ]
            res = minimize_mixture(mu, n, xi, cfg, mode_set=ms, extra_starts=extra)
            mix = res.params
            errs, covs_err, matched = [], [], []
            for i, comp in enumerate(mix.components):
                j, dist = ms.nearest(comp.mean)
                matched.append(j)
                errs.append(dist)
                covs_err.append(
                    np.linalg.norm(res.rescaled_covariances[i] - limit_covs[j])
                    / np.linalg.norm(limit_covs[j])
                )
            mean_err = float(np.max(errs))
            cov_rel = float(np.max(covs_err))
            if len(set(matched)) == n:
                weight_dist = float(
                    np.sum(np.abs(mix.weights - ms.weights[np.asarray(matched)]))
                )
            else:
                weight_dist = math.nan
        records.append(
            NormalityRecord(
                epsilon=eps,
                mean_err=mean_err,
                cov_rel_err=cov_rel,
                weight_dist=weight_dist,
                value=res.value,
                converged=res.converged,
            )
        )
        warm = res
    return records


# ---------------------------------------------------------------------------
# Bernstein-von Mises experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BvMConfig:
    """Noise-averaged KL rate experiment configuration."""

    truth: np.ndarray
    prior: Potential | None = None
    eps_list: tuple = (1e-1, 3e-2, 1e-2, 3e-3, 1e-3)
    draws: int = 100
    seed: int = 0

    def __post_init__(self):
        truth = np.atleast_1d(np.asarray(self.truth, dtype=float))
        object.__setattr__(self, "truth", truth)
        eps = tuple(float(e) for e in self.eps_list)
        if any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise ValueError("eps_list must be strictly decreasing and positive")
        object.__setattr__(self, "eps_list", eps)
        if self.draws < 1:
            raise ValueError("draws must be >= 1")


@dataclass
class BvMLevel:
    epsilon: float
    mean_kl: float
    stderr_kl: float
    n_ok: int
    failures: int
    pinsker_violations: int
    tv_violations: int  # draws with d_TV > 10 * sqrt(mean KL / 2)
    aborted: bool
    kl_values: np.ndarray = field(repr=False, default=None)
    tv_values: np.ndarray = field(repr=False, default=None)

    def csv_row(self) -> str:
        return (
            f"{float(self.epsilon)!r},{float(self.mean_kl)!r},"
            f"{float(self.stderr_kl)!r},{int(self.failures)!r},"
            f"{int(self.tv_violations)!r}"
        )


@dataclass
class BvMResult:
    levels: list
    rate_fit: RateFit | None

    CSV_HEADER = "epsilon,mean_kl,stderr_kl,failures,d_tv_violations"

    @property
    def any_aborted(self) -> bool:
        return any(lv.aborted for lv in self.levels)

    def to_csv(self) -> str:
        import json as _json

        lines = [self.CSV_HEADER]
        lines += [lv.csv_row() for lv in self.levels]
        footer = {
            "rate_fit": self.rate_fit.to_json() if self.rate_fit else None,
            "aborted_levels": [lv.epsilon for lv in self.levels if lv.aborted],
        }
        lines.append("# " + _json.dumps(footer, sort_keys=True))
        return "\n".join(lines) + "\n"


def _posterior_mode(mu: TargetMeasure, x0):
    """Minimize V1/eps + V2 (BFGS + Newton polish); returns (x, D2V1 + eps*D2V2)."""
    eps = mu.epsilon

    def fun(x):
        return mu.v1.value(x) / eps + mu.v2.value(x)

    def jac(x):
        return mu.v1.gradient(x) / eps + mu.v2.gradient(x)

    res = _scipy_minimize(fun, np.asarray(x0, dtype=float), jac=jac, method="BFGS",
                          options={"gtol": 1e-9, "maxiter": 500})
    x = np.asarray(res.x, dtype=float)
    for _ in range(3):
        g = jac(x)
        H = mu.v1.hessian(x) / eps + mu.v2.hessian(x)
        try:
            step = np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)) or fun(x - step) > fun(x):
            break
        x = x - step
    H_eff = mu.v1.hessian(x) + eps * mu.v2.hessian(x)
    return x, 0.5 * (H_eff + H_eff.T)


def _bvm_draw(p, truth, eta, eps, prior, grid_spec, opt_cfg, j_truth_inv):
    """One noise draw: oracle log Z, optimal Gaussian, KL and grid TV."""
    family = posterior_family(p, truth, eta, prior)
    mu = family.at(eps)
    x0 = truth + math.sqrt(eps) * (j_truth_inv @ eta)
    x_hat, h_eff = _posterior_mode(mu, x0)
    local_ms = ModeSet(
        modes=x_hat[None, :],
        hessians=h_eff[None, :, :],
        v2_values=np.array([mu.v2.value(x_hat)]),
    )
    if p.M <= 3:
        integral = quadrature_normalization(mu, grid_spec, mode_set=local_ms)
        log_z = integral.log_value
        grid = integral.grid
    else:
        from .measure import log_laplace_normalization

        log_z = log_laplace_normalization(local_ms, eps)
        grid = None
    res = minimize_single(mu, opt_cfg, mode_set=local_ms, log_z=log_z)
    tv = math.nan
    if grid is not None:
        g_params = res.params

        def log_nu(pts):
            return g_params.log_density(pts)

        def log_mu(pts):
            return -mu.v1.value(pts) / eps - mu.v2.value(pts) - log_z

        tv = tv_distance_grid(log_nu, log_mu, grid)
    return {"kl": res.value, "tv": tv, "converged": res.converged}


def bvm_experiment(
    p: EllipticProblem,
    cfg: BvMConfig,
    jobs: int = 1,
    grid_spec: GridSpec | None = None,
    pinsker_slack: float = 1e-3,
) -> BvMResult:
    """Noise-averaged KL rate: mean_eta KL(best Gaussian || posterior) vs eps.

    Requires the exp (identifiable) variant and at least 30 draws per level.
    The same noise panel is reused across eps levels (common random numbers)
    so the log-log fit sees a smooth curve.  Draws whose optimization fails
    are excluded and counted; a level with more than 10% failures is marked
    aborted and excluded from the fit.
    """
    if p.variant != "exp":
        raise ValueError("the KL-rate experiment requires the exp variant")
    if cfg.draws < 30:
        raise ValueError("at least 30 draws per level are required")
    prior = cfg.prior if cfg.prior is not None else quadratic(dim=p.M)
    truth = np.asarray(cfg.truth, dtype=float)
    if truth.shape != (p.M,):
        raise ValueError("truth must have length M")
    rng = np.random.default_rng(cfg.seed)
    etas = rng.standard_normal((cfg.draws, p.M))
    j_truth_inv = np.linalg.inv(jacobian(p, truth))
    grid_spec = grid_spec or GridSpec()
    opt_cfg = OptimizerConfig(multistart=1, seed=cfg.seed, grad_tol=1e-7)

    levels = []
    for eps in cfg.eps_list:
        def run(eta):
            try:
                return _bvm_draw(
                    p, truth, eta, eps, prior, grid_spec, opt_cfg, j_truth_inv
                )
            except Exception:
                return {"kl": math.nan, "tv": math.nan, "converged": False}

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(run, etas))
        else:
            outcomes = [run(eta) for eta in etas]
        ok = [o for o in outcomes if o["converged"] and math.isfinite(o["kl"])]
        failures = cfg.draws - len(ok)
        aborted = failures > 0.1 * cfg.draws
        kl = np.array([o["kl"] for o in ok])
        tv = np.array([o["tv"] for o in ok])
        mean_kl = float(np.mean(kl)) if len(ok) else math.nan
        stderr = float(np.std(kl, ddof=1) / math.sqrt(len(kl))) if len(ok) > 1 else math.nan
        pinsker_viol = int(
            np.sum(tv > np.sqrt(np.maximum(kl, 0.0) / 2.0) + pinsker_slack)
        )
        tv_viol = (
            int(np.sum(tv > 10.0 * math.sqrt(max(mean_kl, 0.0) / 2.0)))
            if len(ok)
            else 0
        )
        levels.append(
            BvMLevel(
                epsilon=eps,
                mean_kl=mean_kl,
                stderr_kl=stderr,
                n_ok=len(ok),
                failures=failures,
                pinsker_violations=pinsker_viol,
                tv_violations=tv_viol,
                aborted=aborted,
                kl_values=kl,
                tv_values=tv,
            )
        )
    usable = [lv for lv in levels if not lv.aborted]
    rate = fit_rate(
        [lv.epsilon for lv in usable],
        [lv.mean_kl for lv in usable],
        [lv.stderr_kl for lv in usable],
    )
    return BvMResult(levels=levels, rate_fit=rate)


# ---------------------------------------------------------------------------
# log-normalization expectation (Laplace expansion of E log Z)
# ---------------------------------------------------------------------------


@dataclass
class LogZRecord:
    epsilon: float
    mean_log_z: float
    stderr_log_z: float
    reference: float
    gap: float


def log_z_reference(p: EllipticProblem, truth, prior: Potential | None = None, epsilon: float = 1.0):
    """Leading-order expansion of E_eta log Z:

        (d/2) log(2 pi eps) - V0(truth) - log|det DG(truth)|.

    This is the Laplace value at the truth (weight |det DG|^{-1} e^{-V0});
    the noise average only perturbs it at order eps.
    """
    prior = prior if prior is not None else quadratic(dim=p.M)
    truth = np.asarray(truth, dtype=float)
    sign, logdet = np.linalg.slogdet(jacobian(p, truth))
    del sign  # only |det DG| matters
    return (
        0.5 * p.M * math.log(2.0 * math.pi * epsilon)
        - prior.value(truth)
        - logdet
    )


def log_z_expectation_check(
    p: EllipticProblem,
    truth,
    eps_list,
    draws: int = 200,
    seed: int = 0,
    prior: Potential | None = None,
    grid_spec: GridSpec | None = None,
) -> list:
    """Monte-Carlo E_eta log Z (grid oracle) against its Laplace expansion.

    Per eps level the gap mean log Z - reference should shrink linearly in
    eps; the same noise panel is reused across levels.
    """
    if p.M > 3:
        raise ValueError("log Z oracle requires M <= 3")
    prior = prior if prior is not None else quadratic(dim=p.M)
    truth = np.asarray(truth, dtype=float)
    rng = np.random.default_rng(seed)
    etas = rng.standard_normal((draws, p.M))
    j_truth_inv = np.linalg.inv(jacobian(p, truth))
    grid_spec = grid_spec or GridSpec()
    records = []
    for eps in sorted(set(float(e) for e in eps_list), reverse=True):
        values = []
        for eta in etas:
            family = posterior_family(p, truth, eta, prior)
            mu = family.at(eps)
            x0 = truth + math.sqrt(eps) * (j_truth_inv @ eta)
            x_hat, h_eff = _posterior_mode(mu, x0)
            ms = ModeSet(
                modes=x_hat[None, :],
                hessians=h_eff[None, :, :],
                v2_values=np.array([mu.v2.value(x_hat)]),
            )
            values.append(quadrature_normalization(mu, grid_spec, mode_set=ms).log_value)
        values = np.asarray(values)
        ref = log_z_reference(p, truth, prior, eps)
        records.append(
            LogZRecord(
                epsilon=eps,
                mean_log_z=float(np.mean(values)),
                stderr_log_z=float(np.std(values, ddof=1) / math.sqrt(draws)),
                reference=float(ref),
                gap=float(np.mean(values) - ref),
            )
        )
    return records


# ---------------------------------------------------------------------------
# catalog integration
# ---------------------------------------------------------------------------


def builtin_posterior_family(
    name: str,
    M: int = 1,
    f=None,
    truth=None,
    eta=None,
    prior: dict | None = None,
    gauss_newton: bool = False,
) -> MeasureFamily:
    variant = "exp" if name == "elliptic-exp" else "square"
    f = np.ones(M) if f is None else np.asarray(f, dtype=float)
    if truth is None:
        truth = np.zeros(M) if variant == "exp" else np.ones(M)
    eta = np.zeros(M) if eta is None else np.asarray(eta, dtype=float)
    p = EllipticProblem(M=M, f=f, variant=variant)
    prior_pot = (
        quadratic(dim=M) if prior is None else potential_from_spec(prior, M)
    )
    return posterior_family(p, truth, eta, prior_pot, gauss_newton=gauss_newton)


def posterior_family_from_spec(doc: dict) -> MeasureFamily:
    """Problem-catalog document with an elliptic v1: {name, dim, v1, v2}."""
    v1 = doc["v1"]
    params = dict(v1.get("params", {}))
    params.setdefault("M", int(doc["dim"]))
    if int(doc["dim"]) != int(params["M"]):
        raise ValueError("problem dim and elliptic M disagree")
    return builtin_posterior_family(v1["id"], prior=doc.get("v2"), **params)
