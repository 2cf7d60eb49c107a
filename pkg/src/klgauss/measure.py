"""Concentrating target measures, their modes, and normalization constants.

A target measure has unnormalized density exp(-V1(x)/eps - V2(x)).  As eps
shrinks it concentrates on the minimizers of the dominant potential V1; each
minimizer x^i carries the Laplace weight

    beta^i = det(D^2 V1(x^i))^(-1/2) * exp(-V2(x^i)),

and the normalization constant behaves like (2*pi*eps)^(d/2) * sum_i beta^i.
The Simpson grid oracle provides the exact (brute-force) counterpart for
dimensions <= 3.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .potentials import EvaluationError, Potential, potential_from_spec, zero
from .quadrature import (
    BoxTooSmallError,
    GridIntegral,
    OracleDimensionError,
    integrate_exp,
    make_grid,
)


class ModeSearchError(RuntimeError):
    """No minimizer found within the multistart budget."""


class DegenerateModeError(RuntimeError):
    """A located minimizer has a non-positive-definite Hessian."""


@dataclass(frozen=True)
class TargetMeasure:
    """Unnormalized density exp(-v1(x)/epsilon - v2(x)) on R^dim."""

    v1: Potential
    v2: Potential
    epsilon: float

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.v1.dim != self.v2.dim:
            raise ValueError("v1 and v2 must share one dimension")

    @property
    def dim(self) -> int:
        return self.v1.dim


def unnormalized_log_density(mu: TargetMeasure, x):
    """log of the unnormalized density: -v1(x)/eps - v2(x) (never includes log Z)."""
    return -mu.v1.value(x) / mu.epsilon - mu.v2.value(x)


@dataclass(frozen=True)
class MeasureFamily:
    """An eps-indexed family of target measures sharing v2 and a limit v1.

    For analytic catalog problems the dominant potential does not depend on
    eps; Bayesian posteriors supply a genuinely eps-indexed misfit.
    """

    name: str
    dim: int
    v1_limit: Potential
    v2: Potential
    v1_at: Callable[[float], Potential] = None
    default_box: tuple = (-4.0, 4.0)

    def at(self, epsilon: float) -> TargetMeasure:
        v1 = self.v1_limit if self.v1_at is None else self.v1_at(epsilon)
        return TargetMeasure(v1=v1, v2=self.v2, epsilon=epsilon)


@dataclass(frozen=True)
class ModeSet:
    """Minimizers of the limit potential with Hessians and Laplace weights."""

    modes: np.ndarray  # (n, d)
    hessians: np.ndarray  # (n, d, d), each SPD
    v2_values: np.ndarray  # (n,)
    raw_weights: np.ndarray = field(init=False)  # beta^i
    weights: np.ndarray = field(init=False)  # normalized

    def __post_init__(self):
        modes = np.atleast_2d(np.asarray(self.modes, dtype=float))
        n, d = modes.shape
        hess = np.asarray(self.hessians, dtype=float).reshape(n, d, d)
        v2v = np.asarray(self.v2_values, dtype=float).reshape(n)
        log_beta = np.empty(n)
        for i in range(n):
            try:
                chol = np.linalg.cholesky(hess[i])
            except np.linalg.LinAlgError as exc:
                raise DegenerateModeError(
                    f"Hessian at mode {modes[i]} is not positive definite"
                ) from exc
            log_beta[i] = -np.sum(np.log(np.diag(chol))) - v2v[i]
        if n > 1:
            dists = np.linalg.norm(modes[:, None, :] - modes[None, :, :], axis=-1)
            if np.min(dists[np.triu_indices(n, k=1)]) <= 0:
                raise ValueError("modes must be pairwise distinct")
        shift = np.max(log_beta)
        raw = np.exp(log_beta)
        weights = np.exp(log_beta - shift)
        weights = weights / np.sum(weights)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "hessians", hess)
        object.__setattr__(self, "v2_values", v2v)
        object.__setattr__(self, "raw_weights", raw)
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> int:
        return self.modes.shape[0]

    @property
    def dim(self) -> int:
        return self.modes.shape[1]

    def permuted(self, order) -> "ModeSet":
        order = np.asarray(order)
        return ModeSet(
            modes=self.modes[order],
            hessians=self.hessians[order],
            v2_values=self.v2_values[order],
        )

    def nearest(self, point) -> tuple[int, float]:
        """Index and distance of the mode closest to ``point``."""
        d = np.linalg.norm(self.modes - np.asarray(point, dtype=float), axis=1)
        i = int(np.argmin(d))
        return i, float(d[i])

    def to_json(self) -> dict:
        return {
            "modes": self.modes.tolist(),
            "hessians": self.hessians.tolist(),
            "beta_raw": self.raw_weights.tolist(),
            "beta": self.weights.tolist(),
        }


@dataclass(frozen=True)
class MultistartConfig:
    count: int = 64
    box: tuple = (-4.0, 4.0)
    seed: int = 0
    value_tol: float = 1e-8  # keep minimizers this close to the best value
    dedup_scale: float = 1e-6  # merge radius 1e-6 * (1 + |x|)
    grad_tol: float = 1e-10
    max_iter: int = 500


def _box_arrays(box, dim):
    lo, hi = box
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (dim,)).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (dim,)).copy()
    if np.any(hi <= lo):
        raise ValueError("search box must satisfy lo < hi")
    return lo, hi


def find_modes(
    v1_limit: Potential,
    v2: Potential | None = None,
    config: MultistartConfig | None = None,
) -> ModeSet:
    """Locate the global minimizers of the limit potential by multistart descent.

    Uniform starts in the search box, BFGS descent with the analytic
    gradient, a short Newton polish, value filtering at ``value_tol`` above
    the best minimum found, and deduplication within 1e-6 * (1 + |x|).
    """
    cfg = config or MultistartConfig()
    v2 = v2 if v2 is not None else zero(v1_limit.dim)
    if v2.dim != v1_limit.dim:
        raise ValueError("v1 and v2 must share one dimension")
    dim = v1_limit.dim
    rng = np.random.default_rng(cfg.seed)
    lo, hi = _box_arrays(cfg.box, dim)
    starts = lo + (hi - lo) * rng.random((cfg.count, dim))

    found = []
    for x0 in starts:
        try:
            res = _scipy_minimize(
                v1_limit.value,
                x0,
                jac=v1_limit.gradient,
                method="BFGS",
                options={"gtol": cfg.grad_tol, "maxiter": cfg.max_iter},
            )
            x = np.asarray(res.x, dtype=float)
            # Newton polish: BFGS stalls around |g| ~ 1e-9; Newton pushes a
            # nondegenerate minimizer to ~1e-14 in a few steps, while a flat
            # (degenerate) basin keeps contracting and exposes itself below.
            for _ in range(30):
                g = v1_limit.gradient(x)
                H = v1_limit.hessian(x)
                try:
                    step = np.linalg.solve(H, g)
                except np.linalg.LinAlgError:
                    break
                if not np.all(np.isfinite(step)):
                    break
                x_new = x - step
                if v1_limit.value(x_new) <= v1_limit.value(x):
                    x = x_new
                else:
                    break
                if np.linalg.norm(step) <= 1e-14 * (1.0 + np.linalg.norm(x)):
                    break
            val = v1_limit.value(x)
            if np.isfinite(val) and np.linalg.norm(v1_limit.gradient(x)) <= 1e-6:
                found.append((val, x))
        except (EvaluationError, FloatingPointError, OverflowError):
            continue  # descent escaped to a non-finite region; start failed
    if not found:
        raise ModeSearchError("no minimizer found within the multistart budget")

    best = min(v for v, _ in found)
    kept = [x for v, x in found if v <= best + cfg.value_tol]
    # deterministic order, then greedy merge
    kept.sort(key=lambda x: tuple(x))
    modes = []
    for x in kept:
        radius = cfg.dedup_scale * (1.0 + np.linalg.norm(x))
        if all(np.linalg.norm(x - m) > radius for m in modes):
            modes.append(x)
    modes = np.asarray(modes)

    hessians = np.stack([v1_limit.hessian(m) for m in modes])
    for m, H in zip(modes, hessians):
        eig = np.linalg.eigvalsh(0.5 * (H + H.T))
        # relative floor: a basin that is flat at machine scale is degenerate
        if float(eig[0]) <= 1e-10 * (1.0 + float(eig[-1])):
            raise DegenerateModeError(
                f"Hessian at minimizer {m} has smallest eigenvalue {eig[0]:.3e}"
            )
    v2_values = np.array([v2.value(m) for m in modes])
    return ModeSet(modes=modes, hessians=hessians, v2_values=v2_values)


def laplace_normalization(ms: ModeSet, epsilon: float) -> float:
    """Leading-order Laplace value (2*pi*eps)^(d/2) * sum_i beta^i."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return float(
        (2.0 * math.pi * epsilon) ** (ms.dim / 2.0) * np.sum(ms.raw_weights)
    )


def log_laplace_normalization(ms: ModeSet, epsilon: float) -> float:
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    return float(
        0.5 * ms.dim * math.log(2.0 * math.pi * epsilon)
        + np.log(np.sum(ms.raw_weights))
    )


@dataclass(frozen=True)
class GridSpec:
    """Brute-force oracle grid selection.

    With ``box=None`` the box is derived from the modes of the target: the
    union of balls of radius max(6*sqrt(eps/lambda_min), 2) around each mode,
    expanded by x1.5 (up to ``max_expand`` rounds) while the boundary
    integrand stays above ``tail_tol`` of the peak.  Explicit boxes are used
    verbatim and fail hard if too small.
    """

    points_per_dim: int | None = None
    box: tuple | None = None
    tail_tol: float = 1e-14
    radius_floor: float = 2.0
    max_expand: int = 8


def concentration_box(centers, hessians, epsilon, radius_floor=2.0):
    """Union-of-balls bounding box around concentration points."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    hessians = np.asarray(hessians, dtype=float).reshape(
        centers.shape[0], centers.shape[1], centers.shape[1]
    )
    lo = np.full(centers.shape[1], np.inf)
    hi = np.full(centers.shape[1], -np.inf)
    for c, H in zip(centers, hessians):
        lam_min = float(np.min(np.linalg.eigvalsh(0.5 * (H + H.T))))
        if lam_min <= 0:
            radius = radius_floor
        else:
            radius = max(6.0 * math.sqrt(epsilon / lam_min), radius_floor)
        lo = np.minimum(lo, c - radius)
        hi = np.maximum(hi, c + radius)
    return lo, hi


def quadrature_normalization(
    mu: TargetMeasure,
    grid: GridSpec | None = None,
    mode_set: ModeSet | None = None,
    search: MultistartConfig | None = None,
) -> GridIntegral:
    """Brute-force Z = int exp(-v1/eps - v2) dx by tensor Simpson (dim <= 3)."""
    spec = grid or GridSpec()
    if mu.dim > 3:
        raise OracleDimensionError("quadrature oracle supports dimension <= 3")

    def log_f(pts):
        return -mu.v1.value(pts) / mu.epsilon - mu.v2.value(pts)

    if spec.box is not None:
        g = make_grid(spec.box[0], spec.box[1], spec.points_per_dim)
        result = integrate_exp(log_f, g)
        if result.boundary_ratio > spec.tail_tol:
            raise BoxTooSmallError(
                f"boundary integrand at {result.boundary_ratio:.2e} of peak "
                f"exceeds tail_tol={spec.tail_tol:.1e}"
            )
        return result

    if mode_set is None:
        mode_set = find_modes(mu.v1, mu.v2, search)
    lo, hi = concentration_box(
        mode_set.modes, mode_set.hessians, mu.epsilon, spec.radius_floor
    )
    result = None
    for _ in range(spec.max_expand + 1):
        g = make_grid(lo, hi, spec.points_per_dim)
        result = integrate_exp(log_f, g)
        if result.boundary_ratio <= spec.tail_tol:
            return result
        center = 0.5 * (lo + hi)
        lo = center + 1.5 * (lo - center)
        hi = center + 1.5 * (hi - center)
    raise BoxTooSmallError(
        f"tail check still failing after {spec.max_expand} box expansions "
        f"(boundary at {result.boundary_ratio:.2e} of peak)"
    )


# ---------------------------------------------------------------------------
# problem catalog
# ---------------------------------------------------------------------------

_ELLIPTIC_IDS = ("elliptic-exp", "elliptic-square")


def _analytic_family(name, dim, v1, v2, default_box=(-4.0, 4.0)):
    return MeasureFamily(
        name=name, dim=dim, v1_limit=v1, v2=v2, v1_at=None, default_box=default_box
    )


def builtin_problem(name: str, **params) -> MeasureFamily:
    """The named catalog problems.

    quadratic            V1 = |x|^2/2,      V2 = 0
    double-well          V1 = (x^2-1)^2,    V2 = 0
    shifted-double-well  V1 = (x^2-1)^2,    V2 = x
    elliptic-exp/square  Bayesian posterior families (see klgauss.inverse)
    """
    from . import potentials as P

    if name == "quadratic":
        dim = int(params.pop("dim", 1))
        return _analytic_family(name, dim, P.quadratic(dim=dim, **params), P.zero(dim))
    if name == "double-well":
        return _analytic_family(name, 1, P.double_well(**params), P.zero(1))
    if name == "shifted-double-well":
        slope = params.pop("slope", [1.0])
        return _analytic_family(
            name, 1, P.double_well(**params), P.linear(dim=1, slope=slope)
        )
    if name in _ELLIPTIC_IDS:
        from . import inverse

        return inverse.builtin_posterior_family(name, **params)
    raise ValueError(f"unknown catalog problem {name!r}")


def load_problem(source) -> MeasureFamily:
    """Load a problem from a JSON document/file: {name, dim, v1, v2}."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text()
        doc = json.loads(text)
    elif isinstance(source, dict):
        doc = source
    else:
        raise ValueError("problem source must be a path or a dict")
    for key in ("name", "dim", "v1", "v2"):
        if key not in doc:
            raise ValueError(f"problem document missing {key!r}")
    dim = int(doc["dim"])
    v1_spec = doc["v1"]
    if isinstance(v1_spec, dict) and v1_spec.get("id") in _ELLIPTIC_IDS:
        from . import inverse

        return inverse.posterior_family_from_spec(doc)
    v1 = potential_from_spec(v1_spec, dim)
    v2 = potential_from_spec(doc["v2"], dim)
    if not v1.v1_family:
        v1 = Potential(
            dim=v1.dim,
            value_fn=v1.value_fn,
            grad_fn=v1.grad_fn,
            hess_fn=v1.hess_fn,
            name=v1.name,
            growth_bound=v1.growth_bound,
            coercivity=v1.coercivity,
            v1_family=True,
            spec=v1.spec,
        )
    return _analytic_family(doc["name"], dim, v1, v2)


def resolve_problem(name_or_path: str) -> MeasureFamily:
    """CLI helper: builtin catalog name, else a JSON file path."""
    try:
        return builtin_problem(name_or_path)
    except ValueError:
        pass
    path = Path(name_or_path)
    if not path.exists():
        raise ValueError(
            f"{name_or_path!r} is neither a catalog problem nor an existing file"
        )
    return load_problem(path)
