"""Closed-form analysis of the two-source linear fusion model.

The data model has three latent components: two complementary ones
(weights ``beta1``, ``beta2``, visible to exactly one source each) and a
shared one (``beta3``, visible to both).  Sources are the concatenations
``x1 = [z1; z3]`` and ``x2 = [z2; z3]``.  Every error-free linear fusion
predictor splits ``beta3`` into a pair ``(g1, g2)`` with
``g1 + g2 = beta3``; that split is the only degree of freedom and it
alone determines how the model degrades when a single source is
perturbed.

This module provides the generator for synthetic linear data, the direct
fusion predictor, the exact expected single-source-noise loss on the
error-free family, the minimax-optimal split (three closed-form cases),
the all-source least-squares comparator, the gap lower bound between the
two, and an independent numeric oracle that certifies the closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import (
    ConfigurationError,
    ConvergenceError,
    PreconditionError,
    ShapeError,
)

ERROR_FREE_TOL = 1e-12

_LATENT_DISTS = ("standard_normal", "uniform")


def _as_vector(v, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise ShapeError(f"{name} must be a 1-D vector with at least one entry")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class LatentSpec:
    """Generative model: latent weights and per-coordinate noise scale."""

    beta1: np.ndarray
    beta2: np.ndarray
    beta3: np.ndarray
    sigma: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "beta1", _as_vector(self.beta1, "beta1"))
        object.__setattr__(self, "beta2", _as_vector(self.beta2, "beta2"))
        object.__setattr__(self, "beta3", _as_vector(self.beta3, "beta3"))
        if not np.isfinite(self.sigma) or self.sigma < 0:
            raise ConfigurationError("sigma must be a finite nonnegative real")

    @property
    def d1(self) -> int:
        return self.beta1.size

    @property
    def d2(self) -> int:
        return self.beta2.size

    @property
    def d3(self) -> int:
        return self.beta3.size


@dataclass(frozen=True)
class FusionSolution:
    """Linear fusion parameters: ``h1 = [w1; g1]``, ``h2 = [w2; g2]``."""

    w1: np.ndarray
    w2: np.ndarray
    g1: np.ndarray
    g2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "w1", _as_vector(self.w1, "w1"))
        object.__setattr__(self, "w2", _as_vector(self.w2, "w2"))
        object.__setattr__(self, "g1", _as_vector(self.g1, "g1"))
        object.__setattr__(self, "g2", _as_vector(self.g2, "g2"))
        if self.g1.size != self.g2.size:
            raise ShapeError("g1 and g2 must have the same length")

    @property
    def h1(self) -> np.ndarray:
        return np.concatenate([self.w1, self.g1])

    @property
    def h2(self) -> np.ndarray:
        return np.concatenate([self.w2, self.g2])

    def is_error_free(self, spec: LatentSpec, tol: float = ERROR_FREE_TOL) -> bool:
        """True iff w_i = beta_i and g1 + g2 = beta3, per coordinate."""
        if (self.w1.size, self.w2.size, self.g1.size) != (spec.d1, spec.d2, spec.d3):
            return False
        return (
            np.all(np.abs(self.w1 - spec.beta1) <= tol)
            and np.all(np.abs(self.w2 - spec.beta2) <= tol)
            and np.all(np.abs(self.g1 + self.g2 - spec.beta3) <= tol)
        )


@dataclass(frozen=True)
class LinearDataset:
    """Clean samples from the linear fusion data model."""

    x1: np.ndarray  # n x (d1 + d3)
    x2: np.ndarray  # n x (d2 + d3)
    y: np.ndarray  # n
    seed: int
    d1: int
    d2: int
    d3: int

    @property
    def n(self) -> int:
        return self.y.size


def generate_linear_data(
    spec: LatentSpec,
    n: int,
    latent_dist: str = "standard_normal",
    seed: int = 0,
) -> LinearDataset:
    """Draw latents, build x1 = [z1; z3], x2 = [z2; z3], y = sum beta_i^T z_i."""
    if n < 1:
        raise PreconditionError("n must be >= 1")
    if latent_dist not in _LATENT_DISTS:
        raise ConfigurationError(
            f"unknown latent distribution {latent_dist!r}; supported: {_LATENT_DISTS}"
        )
    rng = np.random.default_rng(seed)
    dims = (spec.d1, spec.d2, spec.d3)
    if latent_dist == "standard_normal":
        z1, z2, z3 = (rng.standard_normal((n, d)) for d in dims)
    else:
        z1, z2, z3 = (rng.uniform(-1.0, 1.0, (n, d)) for d in dims)
    y = z1 @ spec.beta1 + z2 @ spec.beta2 + z3 @ spec.beta3
    return LinearDataset(
        x1=np.hstack([z1, z3]),
        x2=np.hstack([z2, z3]),
        y=y,
        seed=seed,
        d1=spec.d1,
        d2=spec.d2,
        d3=spec.d3,
    )


def predict_fdir(sol: FusionSolution, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Direct fusion prediction h1^T x1 + h2^T x2 (vector or batch rows)."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    if x1.shape[-1] != sol.h1.size or x2.shape[-1] != sol.h2.size:
        raise ShapeError(
            f"input dims ({x1.shape[-1]}, {x2.shape[-1]}) do not match "
            f"solution dims ({sol.h1.size}, {sol.h2.size})"
        )
    return x1 @ sol.h1 + x2 @ sol.h2


def expected_ssn_loss(spec: LatentSpec, sol: FusionSolution, source: int) -> float:
    """Exact expected squared loss when only one source carries i.i.d. noise.

    Valid on the error-free family only, where the clean residual vanishes
    and the loss reduces to sigma^2 (||beta_source||^2 + ||g_source||^2).
    """
    if source not in (1, 2):
        raise PreconditionError("source must be 1 or 2")
    if not sol.is_error_free(spec):
        raise PreconditionError(
            "expected_ssn_loss requires an error-free solution "
            "(w_i = beta_i, g1 + g2 = beta3)"
        )
    beta = spec.beta1 if source == 1 else spec.beta2
    g = sol.g1 if source == 1 else sol.g2
    return float(spec.sigma**2 * (beta @ beta + g @ g))


def _case_of(c1: float, c2: float, c3: float) -> int:
    # Boundary ties resolve to the dominance case for determinism.
    if c1 + c3 <= c2:
        return 1
    if c2 + c3 <= c1:
        return 2
    return 3


def solve_maxssn(spec: LatentSpec):
    """Minimax-optimal split of beta3 under single-source random noise.

    Returns (loss, g1, g2, case).  Case 1: source 2 dominates, g1 = beta3;
    case 2 symmetric; case 3: the split that balances the two per-source
    expected losses.
    """
    c1 = float(spec.beta1 @ spec.beta1)
    c2 = float(spec.beta2 @ spec.beta2)
    c3 = float(spec.beta3 @ spec.beta3)
    s2 = spec.sigma**2
    v = spec.beta3
    zero = np.zeros_like(v)

    if c3 == 0.0 and c1 == c2:
        # All branches coincide; return the boundary split g1 = g2 = 0.
        return s2 * c1, zero.copy(), zero.copy(), 1

    case = _case_of(c1, c2, c3)
    if case == 1:
        return s2 * c2, v.copy(), zero.copy(), 1
    if case == 2:
        return s2 * c1, zero.copy(), v.copy(), 2
    loss = s2 * ((c1 + c2) / 2.0 + c3 / 4.0 + (c2 - c1) ** 2 / (4.0 * c3))
    g1 = 0.5 * (1.0 + (c2 - c1) / c3) * v
    return loss, g1, v - g1, 3


def solve_asn_least_squares(spec: LatentSpec):
    """All-source-noise least-squares comparator: the balanced split.

    Returns (asn_loss, g1, g2, induced_maxssn_loss) where the induced
    value is the single-source minimax loss the balanced split actually
    attains.
    """
    c1 = float(spec.beta1 @ spec.beta1)
    c2 = float(spec.beta2 @ spec.beta2)
    c3 = float(spec.beta3 @ spec.beta3)
    s2 = spec.sigma**2
    g = spec.beta3 / 2.0
    asn_loss = s2 * (c1 + c2 + c3 / 2.0)
    induced = s2 * max(c1 + c3 / 4.0, c2 + c3 / 4.0)
    return asn_loss, g, g.copy(), induced


def maxssn_gap_bound(spec: LatentSpec):
    """Gap between the balanced split and the minimax optimum, plus its bound.

    Returns (actual_gap, lower_bound).  The bound is sigma^2 * ||beta3||^2/4
    when |c2 - c1| >= ||beta3||^2 and sigma^2 * |c2 - c1|/4 otherwise.
    """
    c1 = float(spec.beta1 @ spec.beta1)
    c2 = float(spec.beta2 @ spec.beta2)
    c3 = float(spec.beta3 @ spec.beta3)
    s2 = spec.sigma**2
    star, _, _, _ = solve_maxssn(spec)
    _, _, _, induced = solve_asn_least_squares(spec)
    actual_gap = induced - star
    if c3 == 0.0:
        lower_bound = 0.0
    elif abs(c2 - c1) / c3 >= 1.0:
        lower_bound = s2 * c3 / 4.0
    else:
        lower_bound = s2 * abs(c2 - c1) / 4.0
    return actual_gap, lower_bound


def _minimax_objective(g: np.ndarray, c1: float, c2: float, v: np.ndarray) -> float:
    d = g - v
    return max(c1 + float(g @ g), c2 + float(d @ d))


def _coarse_grid_argmin(c1, c2, v, points_per_axis):
    nv = float(np.linalg.norm(v))
    if nv == 0.0:
        g = np.zeros_like(v)
        return g, _minimax_objective(g, c1, c2, v)
    axis = np.linspace(-nv, 2.0 * nv, points_per_axis)
    grids = np.meshgrid(*([axis] * v.size), indexing="ij")
    pts = np.stack([a.ravel() for a in grids], axis=-1)
    f1 = c1 + np.sum(pts**2, axis=1)
    f2 = c2 + np.sum((pts - v) ** 2, axis=1)
    vals = np.maximum(f1, f2)
    k = int(np.argmin(vals))
    return pts[k], float(vals[k])


def oracle_minimax(
    spec: LatentSpec,
    resolution: int = 21,
    refine_iters: int = 200,
):
    """Independent numeric minimizer of the single-source noise minimax.

    Minimizes max{c1 + ||g||^2, c2 + ||g - beta3||^2} by a coarse grid over
    g followed by an epigraph solve (minimize t subject to both quadratics
    <= t) with a sequential quadratic programming refiner started at the
    grid minimizer.  Returns (loss, g1, g2) with loss scaled by sigma^2.

    ``resolution`` is grid points per coordinate; grid cost grows
    exponentially in d3, so it is capped for d3 > 3.
    """
    v = spec.beta3
    c1 = float(spec.beta1 @ spec.beta1)
    c2 = float(spec.beta2 @ spec.beta2)
    s2 = spec.sigma**2
    d3 = v.size
    if d3 > 4:
        raise PreconditionError("grid mode supports d3 <= 4")

    points = min(resolution, 9) if d3 == 4 else resolution
    g0, _ = _coarse_grid_argmin(c1, c2, v, points)

    def objective(x):
        return x[-1]

    cons = [
        {
            "type": "ineq",
            "fun": lambda x: x[-1] - c1 - x[:-1] @ x[:-1],
            "jac": lambda x: np.concatenate([-2.0 * x[:-1], [1.0]]),
        },
        {
            "type": "ineq",
            "fun": lambda x: x[-1] - c2 - (x[:-1] - v) @ (x[:-1] - v),
            "jac": lambda x: np.concatenate([-2.0 * (x[:-1] - v), [1.0]]),
        },
    ]
    x0 = np.concatenate([g0, [_minimax_objective(g0, c1, c2, v)]])
    res = optimize.minimize(
        objective,
        x0,
        jac=lambda x: np.concatenate([np.zeros(d3), [1.0]]),
        constraints=cons,
        method="SLSQP",
        options={"maxiter": refine_iters, "ftol": 1e-14},
    )
    g = res.x[:-1]
    loss = _minimax_objective(g, c1, c2, v)
    if not res.success and loss > x0[-1] + 1e-9:
        raise ConvergenceError(
            f"minimax refinement did not converge: {res.message}", last_iterate=g
        )
    return s2 * loss, g, v - g


def unbalanced_error_profile(
    c1: float, c2: float, c3: float, delta: float, sigma: float
):
    """RMS prediction errors of an unbalanced scalar split under i.i.d. noise.

    With g1 = delta and g2 = c3 - delta, corrupting source 1 gives residual
    c1*e1 + delta*e3 and corrupting source 2 gives c2*e2 + (c3 - delta)*e3.
    Returns (rms_err_src1, rms_err_src2).
    """
    rms1 = sigma * float(np.hypot(c1, delta))
    rms2 = sigma * float(np.hypot(c2, c3 - delta))
    return rms1, rms2
