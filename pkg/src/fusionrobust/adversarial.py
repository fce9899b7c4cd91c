"""Single-source robustness against sign-gradient attacks on the linear model.

For the binary classifier sgn(f_dir) with logistic training loss, the
worst additive perturbation of one source under an l-infinity budget is
the fast gradient sign (FGS) attack, and because the logistic function is
strictly decreasing, minimizing the attacked loss over the beta3 split
reduces to an l1 minimax:

    min_g  max{ ||beta1||_1 + ||g||_1,  ||beta2||_1 + ||beta3 - g||_1 }

This module builds the attack, evaluates the reduced objective, solves
the minimax in closed form (three cases, with a degenerate family of
optima in the middle case), compares against the all-source-attack
optimum, and certifies the closed form with an independent LP oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import ConvergenceError, PreconditionError, ShapeError
from .linear import FusionSolution, _as_vector

# l1 subgradient convention shared with the training core: sgn(0) = 0.
sgn = np.sign


@dataclass(frozen=True)
class AdvSpec:
    """Latent weights plus the l-infinity attack budget epsilon."""

    beta1: np.ndarray
    beta2: np.ndarray
    beta3: np.ndarray
    epsilon: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "beta1", _as_vector(self.beta1, "beta1"))
        object.__setattr__(self, "beta2", _as_vector(self.beta2, "beta2"))
        object.__setattr__(self, "beta3", _as_vector(self.beta3, "beta3"))
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise PreconditionError("epsilon must be a finite nonnegative real")


@dataclass(frozen=True)
class AdvSolution:
    """Optimum of the reduced l1 minimax.

    ``gamma`` is the minimax value before the epsilon factor; ``alpha``
    holds the per-coordinate mixing coefficients g1 = alpha * beta3 (all
    equal in the canonical middle-case solution).
    """

    gamma: float
    g1: np.ndarray
    g2: np.ndarray
    alpha: np.ndarray
    case: int


def fgs_attack(sol: FusionSolution, y: int, epsilon: float):
    """Fast-gradient-sign perturbations for both sources at label y.

    Returns (eta1, eta2) with eta_i = [-eps*y*sgn(w_i); -eps*y*sgn(g_i)].
    """
    if epsilon < 0:
        raise PreconditionError("epsilon must be >= 0")
    if y not in (-1, 1):
        raise PreconditionError("label y must be -1 or +1")
    eta1 = -epsilon * y * np.concatenate([sgn(sol.w1), sgn(sol.g1)])
    eta2 = -epsilon * y * np.concatenate([sgn(sol.w2), sgn(sol.g2)])
    return eta1, eta2


def adv_reduced_objective(sol: FusionSolution, epsilon: float) -> float:
    """eps * max of the two per-source l1 exposure sums."""
    t1 = np.abs(sol.w1).sum() + np.abs(sol.g1).sum()
    t2 = np.abs(sol.w2).sum() + np.abs(sol.g2).sum()
    return float(epsilon * max(t1, t2))


def solve_maxssn_adv(spec: AdvSpec) -> AdvSolution:
    """Closed-form optimum of the reduced l1 minimax over the beta3 split.

    Case 1 (source 2 dominates in l1): gamma = ||beta2||_1, g1 = beta3.
    Case 2 is symmetric.  Case 3 balances the two sides; its optimum is a
    family g1 = alpha * beta3 with any alpha in [0,1]^d3 of the right l1
    mass, and the canonical representative uses a uniform alpha.
    """
    c1 = float(np.abs(spec.beta1).sum())
    c2 = float(np.abs(spec.beta2).sum())
    v = spec.beta3
    c3 = float(np.abs(v).sum())
    zero = np.zeros_like(v)

    if c3 == 0.0 and c1 == c2:
        # Boundary of all cases: nothing to split.
        return AdvSolution(c1, zero.copy(), zero.copy(), zero.copy(), 1)
    if c1 + c3 <= c2:
        return AdvSolution(c2, v.copy(), zero.copy(), np.ones_like(v), 1)
    if c2 + c3 <= c1:
        return AdvSolution(c1, zero.copy(), v.copy(), zero.copy(), 2)
    gamma = 0.5 * (c1 + c2 + c3)
    alpha_val = (gamma - c1) / c3
    alpha = np.full_like(v, alpha_val)
    g1 = alpha * v
    return AdvSolution(gamma, g1, v - g1, alpha, 3)


def adv_gap_condition(spec: AdvSpec):
    """Compare the single-source optimum against all-source-attack training.

    The all-source problem is degenerate: every split g1 = alpha * beta3
    with alpha in [0,1]^d3 is optimal, so its value is reported at the
    canonical symmetric member alpha = 1/2 (the minimum-l2-norm optimum,
    the natural analogue of the least-squares split in the random-noise
    setting).  Returns (strict_gap, maxssn_adv_star, maxssn_adv_prime);
    strict_gap is true iff |c2 - c1| / ||beta3||_1 > 1.
    """
    c1 = float(np.abs(spec.beta1).sum())
    c2 = float(np.abs(spec.beta2).sum())
    c3 = float(np.abs(spec.beta3).sum())
    eps = spec.epsilon
    star = eps * solve_maxssn_adv(spec).gamma
    prime = eps * (max(c1, c2) + 0.5 * c3)
    strict_gap = c3 > 0.0 and abs(c2 - c1) / c3 > 1.0
    return strict_gap, star, prime


def oracle_minimax_l1(spec: AdvSpec, resolution: int = 41):
    """Independent LP minimizer of max{c1 + ||g||_1, c2 + ||g - beta3||_1}.

    A coarse coordinate-wise grid over g in [0, beta3] seeds a sanity
    value; the exact optimum comes from the epigraph linear program with
    split variables for both absolute-value sums.  Returns (gamma, g1).
    """
    v = spec.beta3
    d3 = v.size
    if d3 > 4:
        raise PreconditionError("grid mode supports d3 <= 4")
    c1 = float(np.abs(spec.beta1).sum())
    c2 = float(np.abs(spec.beta2).sum())

    # Coarse grid sanity stage.
    axes = [
        np.linspace(min(0.0, vi), max(0.0, vi), resolution) if vi != 0.0
        else np.array([0.0])
        for vi in v
    ]
    grids = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([a.ravel() for a in grids], axis=-1)
    vals = np.maximum(
        c1 + np.abs(pts).sum(axis=1), c2 + np.abs(pts - v).sum(axis=1)
    )
    k = int(np.argmin(vals))
    grid_gamma = float(vals[k])

    # Exact LP: variables [g, u, w, t]; u >= |g|, w >= |g - v|,
    # t >= c1 + sum(u), t >= c2 + sum(w); minimize t.
    n = 3 * d3 + 1
    cost = np.zeros(n)
    cost[-1] = 1.0
    eye = np.eye(d3)
    zer = np.zeros((d3, d3))
    one = np.ones(d3)
    a_ub = []
    b_ub = []
    for s in (1.0, -1.0):
        a_ub.append(np.hstack([s * eye, -eye, zer, np.zeros((d3, 1))]))
        b_ub.append(np.zeros(d3))
        a_ub.append(np.hstack([s * eye, zer, -eye, np.zeros((d3, 1))]))
        b_ub.append(s * v)
    a_ub.append(np.hstack([np.zeros(d3), one, np.zeros(d3), [-1.0]])[None, :])
    b_ub.append(np.array([-c1]))
    a_ub.append(np.hstack([np.zeros(2 * d3), one, [-1.0]])[None, :])
    b_ub.append(np.array([-c2]))
    res = optimize.linprog(
        cost,
        A_ub=np.vstack(a_ub),
        b_ub=np.concatenate(b_ub),
        bounds=[(None, None)] * n,
        method="highs",
    )
    if not res.success:
        raise ConvergenceError(
            f"l1 minimax LP failed: {res.message}", last_iterate=pts[k]
        )
    gamma = float(res.fun)
    if gamma > grid_gamma + 1e-9:
        raise ConvergenceError(
            "LP value exceeds coarse grid value", last_iterate=res.x[:d3]
        )
    return gamma, res.x[:d3].copy()


def logistic_loss(margin):
    """log(1 + exp(-margin)), numerically stable."""
    m = np.asarray(margin, dtype=np.float64)
    return np.logaddexp(0.0, -m)


def sample_feasible_alpha(rng, v: np.ndarray, target_mass: float, iters: int = 200):
    """Random alpha in [0,1]^d3 with sum(alpha * |v|) = target_mass.

    Used to exercise the middle-case degeneracy: every such alpha yields
    the same minimax value.  Iterative rescale-and-clip; requires
    0 <= target_mass <= ||v||_1 and at least one nonzero coordinate.
    """
    w = np.abs(v)
    total = w.sum()
    if not 0.0 <= target_mass <= total + 1e-12:
        raise PreconditionError("target mass outside [0, ||v||_1]")
    alpha = rng.uniform(0.0, 1.0, size=v.size)
    alpha[w == 0] = 0.0
    for _ in range(iters):
        mass = float(alpha @ w)
        if abs(mass - target_mass) <= 1e-13 * max(1.0, total):
            break
        if mass < target_mass:
            # Push free capacity up proportionally to the remaining headroom.
            head = (1.0 - alpha) * (w > 0)
            cap = float(head @ w)
            if cap <= 0:
                break
            alpha = alpha + head * min(1.0, (target_mass - mass) / cap)
        else:
            alpha = alpha * (target_mass / mass)
        alpha = np.clip(alpha, 0.0, 1.0)
        alpha[w == 0] = 0.0
    return alpha
