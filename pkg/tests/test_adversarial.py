"""Sign-gradient attack reduction and the l1 minimax closed form."""

import numpy as np
import pytest

from fusionrobust.adversarial import (
    AdvSpec,
    adv_gap_condition,
    adv_reduced_objective,
    fgs_attack,
    logistic_loss,
    oracle_minimax_l1,
    sample_feasible_alpha,
    solve_maxssn_adv,
)
from fusionrobust.errors import PreconditionError
from fusionrobust.linear import FusionSolution


def family_member(spec, alpha):
    g1 = alpha * spec.beta3
    return FusionSolution(
        w1=spec.beta1, w2=spec.beta2, g1=g1, g2=spec.beta3 - g1
    )


class TestAdvSpec:
    def test_rejects_negative_epsilon(self):
        with pytest.raises(PreconditionError):
            AdvSpec(beta1=[1.0], beta2=[1.0], beta3=[1.0], epsilon=-0.5)


class TestFgsAttack:
    def test_margin_drop_is_exact(self):
        # The sign perturbation of source i lowers the margin y * f by
        # exactly epsilon * ||h_i||_1, for any input.
        rng = np.random.default_rng(2)
        sol = FusionSolution(
            w1=rng.uniform(-2, 2, 2),
            w2=rng.uniform(-2, 2, 1),
            g1=rng.uniform(-2, 2, 2),
            g2=rng.uniform(-2, 2, 2),
        )
        x1 = rng.standard_normal(4)
        x2 = rng.standard_normal(3)
        eps = 0.7
        for y in (-1, 1):
            eta1, eta2 = fgs_attack(sol, y, eps)
            clean = y * (x1 @ sol.h1 + x2 @ sol.h2)
            attacked1 = y * ((x1 + eta1) @ sol.h1 + x2 @ sol.h2)
            attacked2 = y * (x1 @ sol.h1 + (x2 + eta2) @ sol.h2)
            assert clean - attacked1 == pytest.approx(eps * np.abs(sol.h1).sum())
            assert clean - attacked2 == pytest.approx(eps * np.abs(sol.h2).sum())

    def test_attack_never_decreases_logistic_loss(self):
        rng = np.random.default_rng(3)
        sol = FusionSolution(w1=[1.0], w2=[-2.0], g1=[0.5], g2=[1.5])
        for _ in range(20):
            x1 = rng.standard_normal(2)
            x2 = rng.standard_normal(2)
            y = int(rng.choice([-1, 1]))
            eta1, _ = fgs_attack(sol, y, 0.5)
            clean = logistic_loss(y * (x1 @ sol.h1 + x2 @ sol.h2))
            attacked = logistic_loss(y * ((x1 + eta1) @ sol.h1 + x2 @ sol.h2))
            assert attacked >= clean

    def test_rejects_bad_args(self):
        sol = FusionSolution(w1=[1.0], w2=[1.0], g1=[1.0], g2=[1.0])
        with pytest.raises(PreconditionError):
            fgs_attack(sol, 0, 1.0)
        with pytest.raises(PreconditionError):
            fgs_attack(sol, 1, -1.0)


class TestSolveMaxssnAdv:
    def test_case_1(self):
        spec = AdvSpec(beta1=[1.0], beta2=[10.0], beta3=[2.0])
        sol = solve_maxssn_adv(spec)
        assert sol.case == 1
        assert sol.gamma == pytest.approx(10.0)
        np.testing.assert_array_equal(sol.g1, spec.beta3)

    def test_case_2(self):
        spec = AdvSpec(beta1=[10.0], beta2=[1.0], beta3=[2.0])
        sol = solve_maxssn_adv(spec)
        assert sol.case == 2
        assert sol.gamma == pytest.approx(10.0)
        np.testing.assert_array_equal(sol.g2, spec.beta3)

    def test_case_3_balances_exposures(self):
        spec = AdvSpec(beta1=[1.0], beta2=[2.0], beta3=[3.0])
        sol = solve_maxssn_adv(spec)
        assert sol.case == 3
        assert sol.gamma == pytest.approx(3.0)
        t1 = np.abs(spec.beta1).sum() + np.abs(sol.g1).sum()
        t2 = np.abs(spec.beta2).sum() + np.abs(sol.g2).sum()
        assert t1 == pytest.approx(t2)
        assert t1 == pytest.approx(sol.gamma)

    def test_middle_case_degeneracy(self):
        # Every feasible alpha with the optimal l1 mass attains gamma.
        spec = AdvSpec(beta1=[0.5, 0.5], beta2=[1.0], beta3=[1.0, -2.0])
        sol = solve_maxssn_adv(spec)
        assert sol.case == 3
        rng = np.random.default_rng(7)
        target = float(np.abs(sol.g1).sum())
        for _ in range(10):
            alpha = sample_feasible_alpha(rng, spec.beta3, target)
            member = family_member(spec, alpha)
            assert adv_reduced_objective(member, 1.0) == pytest.approx(sol.gamma)


class TestOracleMinimaxL1:
    def test_agrees_with_closed_form(self):
        rng = np.random.default_rng(23)
        for _ in range(10):
            spec = AdvSpec(
                beta1=rng.uniform(-2, 2, int(rng.integers(1, 4))),
                beta2=rng.uniform(-2, 2, int(rng.integers(1, 4))),
                beta3=rng.uniform(-2, 2, int(rng.integers(1, 4))),
            )
            gamma, g1 = oracle_minimax_l1(spec)
            sol = solve_maxssn_adv(spec)
            assert gamma == pytest.approx(sol.gamma, rel=1e-6)
            member = family_member(spec, np.zeros_like(spec.beta3))
            recon = FusionSolution(
                w1=spec.beta1, w2=spec.beta2, g1=g1, g2=spec.beta3 - g1
            )
            assert adv_reduced_objective(recon, 1.0) == pytest.approx(
                sol.gamma, rel=1e-6
            )
            assert adv_reduced_objective(member, 1.0) >= gamma - 1e-9

    def test_rejects_large_d3(self):
        spec = AdvSpec(beta1=[1.0], beta2=[1.0], beta3=np.ones(5))
        with pytest.raises(PreconditionError):
            oracle_minimax_l1(spec)


class TestAdvGapCondition:
    def test_equality_when_sources_match(self):
        spec = AdvSpec(beta1=[1.0, 0.5], beta2=[1.5], beta3=[2.0], epsilon=2.0)
        strict, star, prime = adv_gap_condition(spec)
        assert not strict
        assert star == pytest.approx(prime, abs=1e-9)

    def test_strict_gap_above_threshold(self):
        spec = AdvSpec(beta1=[1.0], beta2=[5.0], beta3=[2.0])
        strict, star, prime = adv_gap_condition(spec)
        assert strict
        assert prime > star

    def test_epsilon_scales_both_values(self):
        base = AdvSpec(beta1=[1.0], beta2=[5.0], beta3=[2.0], epsilon=1.0)
        double = AdvSpec(beta1=[1.0], beta2=[5.0], beta3=[2.0], epsilon=2.0)
        _, s1, p1 = adv_gap_condition(base)
        _, s2, p2 = adv_gap_condition(double)
        assert s2 == pytest.approx(2 * s1)
        assert p2 == pytest.approx(2 * p1)


class TestSampleFeasibleAlpha:
    def test_mass_and_box_constraints(self):
        rng = np.random.default_rng(29)
        v = np.array([1.0, -2.0, 0.5])
        for target in (0.0, 1.0, 2.5, 3.5):
            alpha = sample_feasible_alpha(rng, v, target)
            assert np.all(alpha >= 0.0) and np.all(alpha <= 1.0)
            assert float(alpha @ np.abs(v)) == pytest.approx(target, abs=1e-9)

    def test_rejects_infeasible_mass(self):
        rng = np.random.default_rng(31)
        with pytest.raises(PreconditionError):
            sample_feasible_alpha(rng, np.array([1.0]), 5.0)
