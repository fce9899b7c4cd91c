"""Randomized verification suites: closed forms vs oracles, gradient checks.

Three suites back the `verify` command: the l2 minimax closed form
against the grid+SQP oracle (plus the gap bound), the l1 adversarial
closed form against the LP oracle (plus the gap condition on a spec set
straddling its threshold), and central finite-difference checks for
every differentiable layer.  Each suite supports a mutation mode that
deliberately perturbs the quantity under test to prove the suite can
detect a broken implementation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffcore as dc
from . import fusion as fu
from .adversarial import AdvSpec, adv_gap_condition, oracle_minimax_l1, solve_maxssn_adv
from .linear import LatentSpec, maxssn_gap_bound, oracle_minimax, solve_maxssn

DEFAULT_SUITE_SEED = 20260823


@dataclass
class CheckResult:
    name: str
    passed: bool
    max_deviation: float
    detail: str = ""


@dataclass
class SuiteReport:
    suite: str
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def max_deviation(self) -> float:
        return max((c.max_deviation for c in self.checks), default=0.0)

    def add(self, name, passed, dev, detail=""):
        self.checks.append(CheckResult(name, bool(passed), float(dev), detail))

    def lines(self):
        out = [f"suite {self.suite}: {'PASS' if self.passed else 'FAIL'}"]
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            line = f"  [{status}] {c.name}: max deviation {c.max_deviation:.3e}"
            if c.detail:
                line += f" ({c.detail})"
            out.append(line)
        return out


def random_latent_specs(n: int, seed: int = DEFAULT_SUITE_SEED):
    """n random specs: dims <= 3, entries uniform[-2, 2], sigma in {.5, 1, 2}."""
    rng = np.random.default_rng(seed)
    specs = []
    for _ in range(n):
        d1, d2, d3 = rng.integers(1, 4, size=3)
        specs.append(
            LatentSpec(
                beta1=rng.uniform(-2.0, 2.0, d1),
                beta2=rng.uniform(-2.0, 2.0, d2),
                beta3=rng.uniform(-2.0, 2.0, d3),
                sigma=float(rng.choice([0.5, 1.0, 2.0])),
            )
        )
    return specs


def random_adv_specs(n: int, seed: int = DEFAULT_SUITE_SEED + 1):
    rng = np.random.default_rng(seed)
    specs = []
    for _ in range(n):
        d1, d2, d3 = rng.integers(1, 4, size=3)
        specs.append(
            AdvSpec(
                beta1=rng.uniform(-2.0, 2.0, d1),
                beta2=rng.uniform(-2.0, 2.0, d2),
                beta3=rng.uniform(-2.0, 2.0, d3),
                epsilon=float(rng.choice([0.5, 1.0, 2.0])),
            )
        )
    return specs


def straddling_adv_specs(n: int = 20, seed: int = DEFAULT_SUITE_SEED + 2):
    """Specs around the gap threshold |c2 - c1| / ||beta3||_1 = 1.

    Half have c1 = c2 exactly (the balanced split is already minimax
    optimal); half sit strictly above the threshold at ratios between
    1.05 and 3, where the balanced split provably pays a gap.
    """
    rng = np.random.default_rng(seed)
    specs = []
    half = n // 2
    for _ in range(half):
        d = int(rng.integers(1, 4))
        b = rng.uniform(0.2, 2.0, d)
        specs.append(
            AdvSpec(beta1=b.copy(), beta2=b.copy(), beta3=rng.uniform(0.2, 2.0, d))
        )
    for _ in range(n - half):
        d3 = int(rng.integers(1, 4))
        b3 = rng.uniform(0.2, 1.0, d3)
        c3 = float(np.abs(b3).sum())
        ratio = float(rng.uniform(1.05, 3.0))
        c1 = float(rng.uniform(0.2, 1.0))
        specs.append(
            AdvSpec(
                beta1=np.array([c1]),
                beta2=np.array([c1 + ratio * c3]),
                beta3=b3,
            )
        )
    return specs


def _rel(a: float, b: float) -> float:
    return abs(a - b) / max(1e-12, abs(a), abs(b))


def run_linear_suite(
    n_specs: int = 100, seed: int = DEFAULT_SUITE_SEED, mutate: bool = False
) -> SuiteReport:
    report = SuiteReport("linear")
    specs = random_latent_specs(n_specs, seed)
    bump = 1e-3 if mutate else 0.0

    worst_agree = 0.0
    worst_balance = 0.0
    worst_bound = 0.0
    branch_steep = 0
    branch_shallow = 0
    for spec in specs:
        loss, g1, g2, case = solve_maxssn(spec)
        loss += bump
        o_loss, _, _ = oracle_minimax(spec)
        worst_agree = max(worst_agree, _rel(loss, o_loss))
        if case == 3:
            s2 = spec.sigma**2
            l1 = s2 * (spec.beta1 @ spec.beta1 + g1 @ g1)
            l2 = s2 * (spec.beta2 @ spec.beta2 + g2 @ g2)
            worst_balance = max(worst_balance, abs(float(l1 - l2)))
        gap, bound = maxssn_gap_bound(spec)
        worst_bound = max(worst_bound, bound - gap)
        c1 = float(spec.beta1 @ spec.beta1)
        c2 = float(spec.beta2 @ spec.beta2)
        c3 = float(spec.beta3 @ spec.beta3)
        if c3 > 0 and abs(c2 - c1) / c3 >= 1.0:
            branch_steep += 1
        else:
            branch_shallow += 1

    report.add("closed form vs oracle (relative)", worst_agree <= 1e-6, worst_agree)
    report.add("case-3 per-source balance", worst_balance <= 1e-9, worst_balance)
    report.add("gap bound holds", worst_bound <= 1e-9, max(worst_bound, 0.0))
    report.add(
        "gap bound branch coverage",
        branch_steep > 0 and branch_shallow > 0,
        0.0,
        f"steep={branch_steep}, shallow={branch_shallow}",
    )
    return report


def run_adversarial_suite(
    n_specs: int = 100, seed: int = DEFAULT_SUITE_SEED + 1, mutate: bool = False
) -> SuiteReport:
    report = SuiteReport("adversarial")
    bump = 1e-3 if mutate else 0.0

    worst_agree = 0.0
    for spec in random_adv_specs(n_specs, seed):
        sol = solve_maxssn_adv(spec)
        gamma_o, _ = oracle_minimax_l1(spec)
        worst_agree = max(worst_agree, _rel(sol.gamma + bump, gamma_o))
    report.add("closed form vs LP oracle (relative)", worst_agree <= 1e-6, worst_agree)

    worst_eq = 0.0
    worst_gap_violation = 0.0
    n_eq = 0
    n_gap = 0
    for spec in straddling_adv_specs(20, seed + 1):
        strict, star, prime = adv_gap_condition(spec)
        if strict:
            n_gap += 1
            # gap must be strictly positive
            worst_gap_violation = max(worst_gap_violation, 1e-12 - (prime - star))
        else:
            n_eq += 1
            worst_eq = max(worst_eq, abs(prime - star) + bump)
    report.add("gap condition equality branch", worst_eq <= 1e-9, worst_eq, f"n={n_eq}")
    report.add(
        "gap condition strict branch",
        worst_gap_violation <= 0.0 and n_gap > 0,
        max(worst_gap_violation, 0.0),
        f"n={n_gap}",
    )
    return report


def _grad_cases(rng: np.random.Generator, broken: bool = False):
    """One build_loss/params pair per differentiable layer."""

    def broken_relu(x):
        # mutation target: forward is relu, backward pretends it is identity
        mask = x.data > 0
        out = dc.Tensor(x.data * mask, parents=(x,), backward=None)

        def backward(g):
            if x.requires_grad:
                x.accumulate(g)

        out._backward = backward
        return out

    act = broken_relu if broken else dc.relu
    cases = {}

    w = dc.parameter(rng.standard_normal((3, 2)))
    b = dc.parameter(rng.standard_normal(2))
    x = rng.standard_normal((4, 3))
    y = rng.standard_normal((4, 2))
    cases["dense"] = (
        lambda: dc.mse_loss(dc.dense(dc.constant(x), w, b), y),
        {"w": w, "b": b},
    )

    cw = dc.parameter(rng.standard_normal((3, 2)))
    cx = rng.standard_normal((2, 4, 4, 3))
    cy = rng.standard_normal((2, 4, 4, 2))
    cases["conv1x1"] = (
        lambda: dc.mse_loss(dc.conv1x1(dc.constant(cx), cw), cy),
        {"w": cw},
    )

    rp = dc.parameter(rng.standard_normal(6) + 0.3)  # keep clear of the relu kink
    rt = rng.standard_normal(6)
    cases["relu"] = (lambda: dc.mse_loss(act(rp), rt), {"p": rp})

    mp = dc.parameter(rng.standard_normal(5))
    mt = rng.standard_normal(5)
    cases["mse_loss"] = (lambda: dc.mse_loss(mp, mt), {"p": mp})

    lp = dc.parameter(rng.standard_normal(5))
    labels = rng.choice([-1.0, 1.0], 5)
    cases["logistic_loss"] = (lambda: dc.logistic_loss(lp, labels), {"p": lp})

    sp = dc.parameter(rng.standard_normal((4, 3)))
    sy = rng.integers(0, 3, 4)
    cases["softmax_cross_entropy"] = (
        lambda: dc.softmax_cross_entropy(sp, sy),
        {"p": sp},
    )

    l1p = dc.parameter(rng.standard_normal((2, 3)) + 0.5)  # off the kink at 0
    cases["l1_penalty"] = (lambda: dc.l1_penalty(l1p, 0.01), {"p": l1p})

    fa = dc.parameter(rng.standard_normal((2, 3, 3, 2)))
    fb = dc.parameter(rng.standard_normal((2, 3, 3, 2)))
    ft = rng.standard_normal((2, 2))

    def mean_loss():
        fused = fu.fuse_mean(fu.FeatureStack([fa, fb]))
        return dc.mse_loss(dc.mean_pool_spatial(fused), ft)

    cases["fuse_mean"] = (mean_loss, {"a": fa, "b": fb})

    ca = dc.parameter(rng.standard_normal((2, 3, 3, 2)))
    cb = dc.parameter(rng.standard_normal((2, 3, 3, 1)))
    ct = rng.standard_normal((2, 3))

    def concat_loss():
        fused = fu.fuse_concat(fu.FeatureStack([ca, cb]))
        return dc.mse_loss(dc.mean_pool_spatial(fused), ct)

    cases["fuse_concat"] = (concat_loss, {"a": ca, "b": cb})

    la = dc.parameter(rng.standard_normal((2, 3, 3, 2)) + 0.5)
    lb = dc.parameter(rng.standard_normal((2, 3, 3, 3)) + 0.5)
    lw = dc.parameter(rng.uniform(0.2, 1.0, (3, 5)))
    lt = rng.standard_normal((2, 3))

    def lel_loss():
        params = fu.LELParams(weights=lw, l1_coeff=0.01)
        fused = fu.fuse_lel(fu.FeatureStack([la, lb]), params, activation=act)
        return dc.add(
            dc.mse_loss(dc.mean_pool_spatial(fused), lt), fu.lel_l1_term(params)
        )

    cases["fuse_lel"] = (lel_loss, {"a": la, "b": lb, "w": lw})

    return cases


GRADIENT_LAYERS = (
    "dense",
    "conv1x1",
    "relu",
    "mse_loss",
    "logistic_loss",
    "softmax_cross_entropy",
    "l1_penalty",
    "fuse_mean",
    "fuse_concat",
    "fuse_lel",
)


def run_gradient_suite(
    instantiations: int = 20, seed: int = DEFAULT_SUITE_SEED + 3, mutate: bool = False
) -> SuiteReport:
    report = SuiteReport("gradients")
    worst = {name: 0.0 for name in GRADIENT_LAYERS}
    failed = {name: False for name in GRADIENT_LAYERS}
    for k in range(instantiations):
        rng = np.random.default_rng(seed + k)
        cases = _grad_cases(rng, broken=mutate)
        for name in GRADIENT_LAYERS:
            build_loss, params = cases[name]
            try:
                dev = dc.finite_difference_check(build_loss, params, rtol=1e-4)
                worst[name] = max(worst[name], dev)
            except AssertionError:
                failed[name] = True
    for name in GRADIENT_LAYERS:
        report.add(f"finite differences: {name}", not failed[name], worst[name])
    return report


def run_suites(suite: str = "all", mutate: bool = False) -> list[SuiteReport]:
    runners = {
        "linear": lambda: run_linear_suite(mutate=mutate),
        "adversarial": lambda: run_adversarial_suite(mutate=mutate),
        "gradients": lambda: run_gradient_suite(mutate=mutate),
    }
    if suite == "all":
        return [runners[name]() for name in ("linear", "adversarial", "gradients")]
    if suite not in runners:
        raise ValueError(f"unknown suite {suite!r}")
    return [runners[suite]()]
