"""Minimization of the KL objectives over Gaussians and constrained mixtures.

Parameterization makes the feasible sets unconstrained:

* covariances through lower-triangular Cholesky factors with log diagonal
  (always SPD, log det linear in the parameters);
* the approximating measure is N(m, eps * L L^T), i.e. the optimizer works
  in the rescaled covariance whose limit is (D^2 V1(x^i))^(-1);
* mixture weights through a softmax pinned at the first component, kept
  above the floor xi1 by a logarithmic barrier, with mean separation
  enforced by an escalating quadratic hinge penalty.

The single-Gaussian objective is evaluated by fixed-node Gauss-Hermite
quadrature and differentiated analytically through the nodes; the mixture
objective uses the same smooth deterministic estimator (including a
Gauss-Hermite evaluation of the mixture entropy) with central-difference
gradients.  Multistart globalization seeds means at the located modes with
covariances from the inverse mode Hessians.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize as _scipy_minimize
from scipy.special import logsumexp

from .gaussian import GaussianParams, MixtureParams
from .measure import (
    ModeSet,
    MultistartConfig,
    TargetMeasure,
    find_modes,
    log_laplace_normalization,
)
from .potentials import EvaluationError
from .quadrature import gauss_hermite

_LOGDIAG_CAP = 46.0  # exp(+-46) ~ 1e+-20; keeps line-search trials finite


class InfeasibleConstraintError(ValueError):
    """The requested constraint set is empty (e.g. xi1 > 1/n)."""


@dataclass(frozen=True)
class OptimizerConfig:
    max_iters: int = 300
    grad_tol: float = 1e-8
    multistart: int = 8
    box: tuple | None = None
    barrier: float = 1e-6
    separation_weight: float = 100.0
    seed: int = 0
    gh_order: int = 20

    def __post_init__(self):
        if self.grad_tol <= 0:
            raise ValueError("grad_tol must be positive")
        if self.multistart < 1:
            raise ValueError("multistart count must be >= 1")


@dataclass
class StartTrace:
    start_value: float
    value: float
    grad_norm: float
    iterations: int
    converged: bool

    def to_json(self):
        return {
            "start_value": self.start_value,
            "value": self.value,
            "grad_norm": self.grad_norm,
            "iterations": self.iterations,
            "converged": self.converged,
        }


@dataclass
class OptimResult:
    """Best point over all multistarts.

    ``params`` carries the full (eps-scaled) covariances, so it is the
    actual approximating measure; ``rescaled_covariances`` recovers the
    eps-free parameterization whose limits the theory predicts.
    """

    kind: str  # "single" | "mixture"
    params: object  # GaussianParams | MixtureParams
    epsilon: float
    value: float
    converged: bool
    iterations: int
    log_z: float
    traces: list = field(default_factory=list)

    @property
    def rescaled_covariances(self) -> np.ndarray:
        if self.kind == "single":
            return self.params.covariance / self.epsilon
        return np.stack([c.covariance for c in self.params.components]) / self.epsilon

    @property
    def weights(self):
        return None if self.kind == "single" else self.params.weights

    def to_json(self, verbose: bool = False) -> dict:
        doc = {
            "kind": self.kind,
            "epsilon": self.epsilon,
            "value": self.value,
            "converged": self.converged,
            "iterations": self.iterations,
            "log_z": self.log_z,
            "params": self.params.to_json(),
            "rescaled_covariances": self.rescaled_covariances.tolist(),
        }
        if self.kind == "mixture":
            doc["weights"] = self.params.weights.tolist()
        if verbose:
            doc["traces"] = [t.to_json() for t in self.traces]
        return doc


# ---------------------------------------------------------------------------
# Cholesky packing
# ---------------------------------------------------------------------------


def _n_chol_params(d):
    return d * (d + 1) // 2


def _pack_chol(L):
    d = L.shape[0]
    parts = [np.log(np.diag(L))]
    if d > 1:
        parts.append(L[np.tril_indices(d, k=-1)])
    return np.concatenate(parts)


def _unpack_chol(theta, d):
    logdiag = np.clip(theta[:d], -_LOGDIAG_CAP, _LOGDIAG_CAP)
    L = np.zeros((d, d))
    L[np.diag_indices(d)] = np.exp(logdiag)
    if d > 1:
        L[np.tril_indices(d, k=-1)] = theta[d:]
    return L


def _default_box(mu, mode_set, cfg):
    if cfg.box is not None:
        return cfg.box
    if mode_set is not None and mode_set.n > 0:
        lo = np.min(mode_set.modes, axis=0) - 2.0
        hi = np.max(mode_set.modes, axis=0) + 2.0
        return (lo, hi)
    return (-4.0, 4.0)


def _locate_modes(mu, cfg):
    return find_modes(
        mu.v1, mu.v2, MultistartConfig(box=_default_box(mu, None, cfg), seed=cfg.seed)
    )


def _resolve_log_z(mu, mode_set, log_z, cfg, extra_starts):
    """Fill in the Laplace log Z and mode-informed starts where missing.

    Warm-started calls (extra_starts given) deliberately skip mode location
    so a sweep keeps tracking its established basin.
    """
    if mode_set is None and not extra_starts:
        try:
            mode_set = _locate_modes(mu, cfg)
        except Exception:
            if log_z is None:
                raise  # Laplace log Z needs the modes; starts alone do not
    if log_z is not None:
        return float(log_z), mode_set
    if mode_set is None:
        mode_set = _locate_modes(mu, cfg)
    return log_laplace_normalization(mode_set, mu.epsilon), mode_set


# ---------------------------------------------------------------------------
# single Gaussian
# ---------------------------------------------------------------------------


class _SingleObjective:
    """F(theta) = KL(N(m, eps L L^T) || mu) via Gauss-Hermite, with gradient.

    The mean is optimized in concentration units, m = sqrt(eps) * theta_m,
    which keeps every Hessian block of the objective O(1) as eps shrinks
    (the raw mean curvature grows like 1/eps and ruins BFGS conditioning).
    """

    def __init__(self, mu: TargetMeasure, log_z: float, order: int):
        self.mu = mu
        self.log_z = log_z
        self.d = mu.dim
        self.z, self.w = gauss_hermite(order, self.d)
        self.sqrt_eps = math.sqrt(mu.epsilon)
        self.scale = math.sqrt(2.0 * mu.epsilon)

    def pack(self, m, L):
        return np.concatenate(
            [np.asarray(m, dtype=float) / self.sqrt_eps, _pack_chol(L)]
        )

    def split(self, theta):
        return self.sqrt_eps * theta[: self.d], _unpack_chol(theta[self.d :], self.d)

    def value_grad(self, theta):
        d, eps = self.d, self.mu.epsilon
        m, L = self.split(theta)
        x = m + self.scale * (self.z @ L.T)
        try:
            v1 = self.mu.v1.value(x)
            v2 = self.mu.v2.value(x)
            g1 = self.mu.v1.gradient(x)
            g2 = self.mu.v2.gradient(x)
        except (EvaluationError, FloatingPointError):
            return math.inf, np.zeros_like(theta)
        logdiag_sum = float(np.sum(np.log(np.diag(L))))
        value = (
            float(np.dot(self.w, v1)) / eps
            + float(np.dot(self.w, v2))
            - 0.5 * d * math.log(2.0 * math.pi * eps)
            - logdiag_sum
            - 0.5 * d
            + self.log_z
        )
        if not np.isfinite(value):
            return math.inf, np.zeros_like(theta)
        gx = g1 / eps + g2  # (K, d) gradient of the potential part at the nodes
        grad_m = self.sqrt_eps * (self.w @ gx)
        dL = self.scale * np.einsum("k,ka,kb->ab", self.w, gx, self.z)
        diag = np.diag(L)
        grad_logdiag = np.diag(dL) * diag - 1.0
        grad = np.concatenate(
            [grad_m, grad_logdiag]
            + ([dL[np.tril_indices(d, k=-1)]] if d > 1 else [])
        )
        return value, grad


def _accept_tol(grad_tol):
    # BFGS stops with "precision loss" once objective differences fall below
    # rounding; a small gradient at that point still certifies the minimum
    return max(10.0 * grad_tol, 1e-6)


def _run_starts(objective, starts, cfg, grad_tol):
    traces = []
    best = None
    for theta0 in starts:
        f0, _ = objective.value_grad(theta0)
        res = _scipy_minimize(
            objective.value_grad,
            theta0,
            jac=True,
            method="BFGS",
            options={"gtol": grad_tol, "maxiter": cfg.max_iters},
        )
        gnorm = float(np.max(np.abs(res.jac))) if np.all(np.isfinite(res.jac)) else math.inf
        ok = bool(res.success) or gnorm <= _accept_tol(grad_tol)
        traces.append(
            StartTrace(
                start_value=float(f0),
                value=float(res.fun),
                grad_norm=gnorm,
                iterations=int(res.nit),
                converged=ok,
            )
        )
        if np.isfinite(res.fun) and (best is None or res.fun < best[0]):
            best = (float(res.fun), np.asarray(res.x), ok, int(res.nit))
    return best, traces


def minimize_single(
    mu: TargetMeasure,
    cfg: OptimizerConfig | None = None,
    mode_set: ModeSet | None = None,
    log_z: float | None = None,
    extra_starts: list | None = None,
) -> OptimResult:
    """Best single Gaussian N(m, eps*Sigma) for the target, over multistarts.

    ``log_z`` defaults to the Laplace value from the located modes; pass the
    grid-oracle value for exact KL numbers.  ``extra_starts`` (pairs of
    (mean, rescaled covariance)) are tried first; warm starting a sweep goes
    through this hook.
    """
    cfg = cfg or OptimizerConfig()
    log_z, mode_set = _resolve_log_z(mu, mode_set, log_z, cfg, extra_starts)
    d = mu.dim
    obj = _SingleObjective(mu, log_z, cfg.gh_order)

    starts = []
    for m0, sigma0 in extra_starts or []:
        L0 = np.linalg.cholesky(np.atleast_2d(np.asarray(sigma0, dtype=float)))
        starts.append(obj.pack(m0, L0))
    if mode_set is not None:
        for x, H in zip(mode_set.modes, mode_set.hessians):
            L0 = np.linalg.cholesky(np.linalg.inv(H))
            starts.append(obj.pack(x, L0))
    rng = np.random.default_rng(cfg.seed)
    lo, hi = _box_bounds(_default_box(mu, mode_set, cfg), d)
    n_random = max(0, cfg.multistart - len(starts))
    for _ in range(n_random):
        m0 = lo + (hi - lo) * rng.random(d)
        starts.append(obj.pack(m0, np.eye(d)))

    best, traces = _run_starts(obj, starts, cfg, cfg.grad_tol)
    if best is None:
        raise RuntimeError("all optimizer starts failed to produce a finite value")
    value, theta, ok, nit = best
    m, L = obj.split(theta)
    params = GaussianParams(m, math.sqrt(mu.epsilon) * L)
    return OptimResult(
        kind="single",
        params=params,
        epsilon=mu.epsilon,
        value=value,
        converged=ok,
        iterations=nit,
        log_z=log_z,
        traces=traces,
    )


# ---------------------------------------------------------------------------
# mixtures
# ---------------------------------------------------------------------------


class _MixtureObjective:
    """G(theta) for n components, smooth and deterministic.

    theta = [w (n-1 softmax logits), means (n*d), chol params (n * d(d+1)/2)].
    The entropy term integrates log rho under each component by the same
    Gauss-Hermite rule, so the whole objective is smooth; the barrier keeps
    weights above xi1 and the hinge pushes means xi2 apart.
    """

    def __init__(self, mu, log_z, order, xi, barrier, separation_weight):
        self.mu = mu
        self.log_z = log_z
        self.d = mu.dim
        self.xi = xi
        self.barrier = barrier
        self.sep_weight = separation_weight
        self.z, self.w = gauss_hermite(order, self.d)
        self.sqrt_eps = math.sqrt(mu.epsilon)
        self.scale = math.sqrt(2.0 * mu.epsilon)

    def n_params(self, n):
        return (n - 1) + n * self.d + n * _n_chol_params(self.d)

    def split(self, theta, n):
        d = self.d
        logits = np.concatenate([[0.0], theta[: n - 1]])
        alpha = np.exp(logits - logsumexp(logits))
        # means in concentration units (see _SingleObjective)
        means = self.sqrt_eps * theta[n - 1 : n - 1 + n * d].reshape(n, d)
        chols = []
        off = n - 1 + n * d
        k = _n_chol_params(d)
        for i in range(n):
            chols.append(_unpack_chol(theta[off + i * k : off + (i + 1) * k], d))
        return alpha, means, chols

    def pack(self, alpha, means, chols):
        logits = np.log(np.asarray(alpha, dtype=float))
        parts = [
            logits[1:] - logits[0],
            np.asarray(means, dtype=float).ravel() / self.sqrt_eps,
        ]
        parts += [_pack_chol(L) for L in chols]
        return np.concatenate(parts)

    def core(self, alpha, means, chols):
        """KL value without barrier/penalty terms (full covariances eps*LL^T)."""
        d, eps = self.d, self.mu.epsilon
        n = len(chols)
        nodes = [means[i] + self.scale * (self.z @ chols[i].T) for i in range(n)]
        try:
            v_part = 0.0
            for i in range(n):
                v_part += alpha[i] * (
                    float(np.dot(self.w, self.mu.v1.value(nodes[i]))) / eps
                    + float(np.dot(self.w, self.mu.v2.value(nodes[i])))
                )
        except (EvaluationError, FloatingPointError):
            return math.inf
        # mixture log-density at every component's nodes
        log_alpha = np.log(alpha)
        const = [
            -0.5 * (d * math.log(2.0 * math.pi * eps) + 2.0 * np.sum(np.log(np.diag(L))))
            for L in chols
        ]
        entropy = 0.0
        for i in range(n):
            comp_log = np.empty((n, nodes[i].shape[0]))
            for j in range(n):
                diff = nodes[i] - means[j]
                y = np.linalg.solve(chols[j], diff.T) / math.sqrt(eps)
                comp_log[j] = const[j] - 0.5 * np.sum(y * y, axis=0) + log_alpha[j]
            entropy += alpha[i] * float(np.dot(self.w, logsumexp(comp_log, axis=0)))
        value = entropy + v_part + self.log_z
        return value if np.isfinite(value) else math.inf

    def penalties(self, alpha, means):
        xi1, xi2 = self.xi
        n = alpha.size
        total = 0.0
        if n > 1:
            slack = alpha - xi1
            if np.any(slack <= 0):
                return math.inf
            ref = 1.0 / n - xi1
            total -= self.barrier * float(np.sum(np.log(slack / ref)))
            for i in range(n):
                for j in range(i + 1, n):
                    gap = xi2 - float(np.linalg.norm(means[i] - means[j]))
                    if gap > 0:
                        total += self.sep_weight * gap * gap
        return total

    def __call__(self, theta, n):
        alpha, means, chols = self.split(theta, n)
        pen = self.penalties(alpha, means)
        if not np.isfinite(pen):
            return math.inf
        core = self.core(alpha, means, chols)
        return core + pen


def _fd_grad(fun, theta, f0=None):
    g = np.zeros_like(theta)
    for i in range(theta.size):
        h = 1e-6 * (1.0 + abs(theta[i]))
        e = np.zeros_like(theta)
        e[i] = h
        fp, fm = fun(theta + e), fun(theta - e)
        if np.isfinite(fp) and np.isfinite(fm):
            g[i] = (fp - fm) / (2 * h)
        elif f0 is not None and np.isfinite(fp):
            g[i] = (fp - f0) / h
        elif f0 is not None and np.isfinite(fm):
            g[i] = (f0 - fm) / h
    return g


def _mixture_starts(mu, n, mode_set, cfg, rng, extra_starts, obj):
    d = mu.dim
    starts = []
    for mix0 in extra_starts or []:
        alpha0, means0, chols0 = mix0
        starts.append(obj.pack(alpha0, means0, chols0))
    if mode_set is not None and mode_set.n > 0:
        k = mode_set.n
        order = np.argsort(-mode_set.raw_weights, kind="stable")
        assignments = [np.array([order[i % k] for i in range(n)])]
        for _ in range(2):
            assignments.append(rng.permutation(k)[np.arange(n) % k])
        for a in assignments:
            means0 = mode_set.modes[a] + 0.05 * math.sqrt(mu.epsilon) * rng.standard_normal((n, d))
            chols0 = [np.linalg.cholesky(np.linalg.inv(mode_set.hessians[j])) for j in a]
            alpha0 = np.full(n, 1.0 / n)
            starts.append(obj.pack(alpha0, means0, chols0))
    lo, hi = _box_bounds(_default_box(mu, mode_set, cfg), d)
    min_starts = max(cfg.multistart, 1 if starts else 2)
    while len(starts) < min_starts:
        means0 = lo + (hi - lo) * rng.random((n, d))
        chols0 = [np.eye(d) for _ in range(n)]
        starts.append(obj.pack(np.full(n, 1.0 / n), means0, chols0))
    return starts


def _box_bounds(box, d):
    lo = np.broadcast_to(np.asarray(box[0], dtype=float), (d,))
    hi = np.broadcast_to(np.asarray(box[1], dtype=float), (d,))
    return lo, hi


def minimize_mixture(
    mu: TargetMeasure,
    n: int,
    xi: tuple,
    cfg: OptimizerConfig | None = None,
    mode_set: ModeSet | None = None,
    log_z: float | None = None,
    extra_starts: list | None = None,
) -> OptimResult:
    """Best n-component Gaussian mixture in the constrained family.

    Weight floor xi[0] must satisfy xi[0] <= 1/n (otherwise the feasible set
    is empty and the call is rejected).  The separation hinge weight is
    escalated x10 (up to 4 rounds) until the returned means satisfy the
    xi[1] separation; components are returned sorted by first mean
    coordinate.
    """
    cfg = cfg or OptimizerConfig()
    xi1, xi2 = float(xi[0]), float(xi[1])
    if n < 1:
        raise ValueError("component count must be >= 1")
    if not (0.0 < xi1 <= 1.0 / n):
        raise InfeasibleConstraintError(
            f"weight floor xi1={xi1} infeasible for n={n} (needs 0 < xi1 <= {1.0 / n})"
        )
    if xi2 <= 0:
        raise InfeasibleConstraintError("separation xi2 must be positive")
    log_z, mode_set = _resolve_log_z(mu, mode_set, log_z, cfg, extra_starts)
    rng = np.random.default_rng(cfg.seed)

    sep_weight = cfg.separation_weight
    grad_tol = max(cfg.grad_tol, 1e-6)
    best_theta = None
    traces = []
    for _ in range(5):
        obj = _MixtureObjective(
            mu, log_z, cfg.gh_order, (xi1, xi2), cfg.barrier, sep_weight
        )
        fun = lambda th: obj(th, n)
        if best_theta is None:
            starts = _mixture_starts(mu, n, mode_set, cfg, rng, extra_starts, obj)
        else:
            starts = [best_theta]
        best = None
        for theta0 in starts:
            f0 = fun(theta0)
            res = _scipy_minimize(
                fun,
                theta0,
                jac=lambda th: _fd_grad(fun, th, fun(th)),
                method="BFGS",
                options={"gtol": grad_tol, "maxiter": cfg.max_iters},
            )
            gnorm = (
                float(np.max(np.abs(res.jac)))
                if np.all(np.isfinite(res.jac))
                else math.inf
            )
            ok = bool(res.success) or gnorm <= _accept_tol(grad_tol)
            traces.append(
                StartTrace(
                    start_value=float(f0),
                    value=float(res.fun),
                    grad_norm=gnorm,
                    iterations=int(res.nit),
                    converged=ok,
                )
            )
            if np.isfinite(res.fun) and (best is None or res.fun < best[0]):
                best = (float(res.fun), np.asarray(res.x), ok, int(res.nit))
        if best is None:
            raise RuntimeError("all mixture starts failed to produce a finite value")
        _, best_theta, ok, nit = best
        alpha, means, chols = obj.split(best_theta, n)
        sep_ok = n == 1 or _min_separation(means) >= xi2 - 1e-9
        if sep_ok:
            break
        sep_weight *= 10.0
    converged = ok and sep_ok and bool(np.all(alpha >= xi1 - 1e-9))

    order = np.argsort(means[:, 0], kind="stable")
    comps = tuple(
        GaussianParams(means[i], math.sqrt(mu.epsilon) * chols[i]) for i in order
    )
    params = MixtureParams(components=comps, weights=alpha[order], xi=(xi1, xi2))
    value = float(obj.core(alpha, means, chols))
    return OptimResult(
        kind="mixture",
        params=params,
        epsilon=mu.epsilon,
        value=value,
        converged=converged,
        iterations=nit,
        log_z=log_z,
        traces=traces,
    )


def _min_separation(means):
    n = means.shape[0]
    if n == 1:
        return math.inf
    dists = np.linalg.norm(means[:, None, :] - means[None, :, :], axis=-1)
    return float(np.min(dists[np.triu_indices(n, k=1)]))
