"""Closed-form linear analysis: data model, exact losses, minimax split."""

import numpy as np
import pytest

from fusionrobust.errors import ConfigurationError, PreconditionError, ShapeError
from fusionrobust.linear import (
    FusionSolution,
    LatentSpec,
    expected_ssn_loss,
    generate_linear_data,
    maxssn_gap_bound,
    oracle_minimax,
    predict_fdir,
    solve_asn_least_squares,
    solve_maxssn,
    unbalanced_error_profile,
)


def error_free_solution(spec, g1):
    g1 = np.asarray(g1, dtype=np.float64)
    return FusionSolution(
        w1=spec.beta1, w2=spec.beta2, g1=g1, g2=spec.beta3 - g1
    )


class TestLatentSpec:
    def test_dims(self):
        spec = LatentSpec(beta1=[1.0], beta2=[1.0, 2.0], beta3=[3.0, 0.0, 1.0])
        assert (spec.d1, spec.d2, spec.d3) == (1, 2, 3)

    def test_rejects_matrix_beta(self):
        with pytest.raises(ShapeError):
            LatentSpec(beta1=[[1.0]], beta2=[1.0], beta3=[1.0])

    def test_rejects_nonfinite(self):
        with pytest.raises(ConfigurationError):
            LatentSpec(beta1=[np.inf], beta2=[1.0], beta3=[1.0])

    def test_rejects_negative_sigma(self):
        with pytest.raises(ConfigurationError):
            LatentSpec(beta1=[1.0], beta2=[1.0], beta3=[1.0], sigma=-1.0)


class TestGenerateLinearData:
    def test_shapes_and_determinism(self):
        spec = LatentSpec(beta1=[1.0, -0.5], beta2=[2.0], beta3=[0.5, 1.0, -1.0])
        a = generate_linear_data(spec, 64, seed=7)
        b = generate_linear_data(spec, 64, seed=7)
        assert a.x1.shape == (64, 5)
        assert a.x2.shape == (64, 4)
        np.testing.assert_array_equal(a.x1, b.x1)
        np.testing.assert_array_equal(a.y, b.y)
        c = generate_linear_data(spec, 64, seed=8)
        assert not np.array_equal(a.y, c.y)

    def test_labels_reproduced_by_error_free_predictor(self):
        # y is exactly recoverable from the views with the split g1 = beta3.
        spec = LatentSpec(beta1=[1.0], beta2=[2.0, 1.0], beta3=[3.0, -1.0])
        data = generate_linear_data(spec, 128, seed=3)
        sol = error_free_solution(spec, spec.beta3)
        np.testing.assert_allclose(predict_fdir(sol, data.x1, data.x2), data.y)

    def test_rejects_bad_args(self):
        spec = LatentSpec(beta1=[1.0], beta2=[1.0], beta3=[1.0])
        with pytest.raises(PreconditionError):
            generate_linear_data(spec, 0)
        with pytest.raises(ConfigurationError):
            generate_linear_data(spec, 8, latent_dist="cauchy")


class TestPredictFdir:
    def test_shape_mismatch(self):
        sol = FusionSolution(w1=[1.0], w2=[1.0], g1=[1.0], g2=[1.0])
        with pytest.raises(ShapeError):
            predict_fdir(sol, np.zeros((4, 3)), np.zeros((4, 2)))


class TestExpectedSsnLoss:
    def test_requires_error_free(self):
        spec = LatentSpec(beta1=[1.0], beta2=[1.0], beta3=[2.0])
        bad = FusionSolution(w1=[1.1], w2=[1.0], g1=[1.0], g2=[1.0])
        with pytest.raises(PreconditionError):
            expected_ssn_loss(spec, bad, 1)

    def test_matches_monte_carlo(self):
        # Independent oracle: simulate noise on one source and average.
        rng = np.random.default_rng(5)
        for trial in range(5):
            spec = LatentSpec(
                beta1=rng.uniform(-2, 2, 2),
                beta2=rng.uniform(-2, 2, 1),
                beta3=rng.uniform(-2, 2, 2),
                sigma=float(rng.choice([0.5, 1.0])),
            )
            g1 = rng.uniform(0, 1, 2) * spec.beta3
            sol = error_free_solution(spec, g1)
            data = generate_linear_data(spec, 20000, seed=trial)
            noise = rng.normal(0.0, spec.sigma, size=data.x1.shape)
            pred = predict_fdir(sol, data.x1 + noise, data.x2)
            empirical = float(((pred - data.y) ** 2).mean())
            exact = expected_ssn_loss(spec, sol, 1)
            assert empirical == pytest.approx(exact, rel=0.1)


class TestSolveMaxssn:
    def test_case_1_dominant_source_two(self):
        spec = LatentSpec(beta1=[1.0], beta2=[10.0], beta3=[2.0])
        loss, g1, g2, case = solve_maxssn(spec)
        assert case == 1
        np.testing.assert_array_equal(g1, spec.beta3)
        np.testing.assert_array_equal(g2, np.zeros(1))
        assert loss == pytest.approx(100.0)

    def test_case_2_dominant_source_one(self):
        spec = LatentSpec(beta1=[10.0], beta2=[1.0], beta3=[2.0])
        loss, g1, g2, case = solve_maxssn(spec)
        assert case == 2
        np.testing.assert_array_equal(g2, spec.beta3)
        assert loss == pytest.approx(100.0)

    def test_case_3_balances_per_source_losses(self):
        spec = LatentSpec(beta1=[1.0], beta2=[2.0], beta3=[3.0], sigma=1.5)
        loss, g1, g2, case = solve_maxssn(spec)
        assert case == 3
        sol = error_free_solution(spec, g1)
        l1 = expected_ssn_loss(spec, sol, 1)
        l2 = expected_ssn_loss(spec, sol, 2)
        assert l1 == pytest.approx(l2, abs=1e-12)
        assert loss == pytest.approx(l1)

    def test_split_is_feasible(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            spec = LatentSpec(
                beta1=rng.uniform(-2, 2, int(rng.integers(1, 4))),
                beta2=rng.uniform(-2, 2, int(rng.integers(1, 4))),
                beta3=rng.uniform(-2, 2, int(rng.integers(1, 4))),
            )
            _, g1, g2, _ = solve_maxssn(spec)
            np.testing.assert_allclose(g1 + g2, spec.beta3, atol=1e-12)

    def test_never_worse_than_balanced_split(self):
        rng = np.random.default_rng(13)
        for _ in range(50):
            spec = LatentSpec(
                beta1=rng.uniform(-2, 2, 2),
                beta2=rng.uniform(-2, 2, 2),
                beta3=rng.uniform(-2, 2, 2),
            )
            star, _, _, _ = solve_maxssn(spec)
            _, _, _, induced = solve_asn_least_squares(spec)
            assert star <= induced + 1e-12


class TestAsnLeastSquares:
    def test_balanced_split(self):
        spec = LatentSpec(beta1=[1.0], beta2=[1.0], beta3=[2.0], sigma=2.0)
        asn_loss, g1, g2, induced = solve_asn_least_squares(spec)
        np.testing.assert_array_equal(g1, [1.0])
        np.testing.assert_array_equal(g2, [1.0])
        assert asn_loss == pytest.approx(4.0 * (1 + 1 + 2))
        assert induced == pytest.approx(4.0 * (1 + 1))


class TestGapBound:
    def test_zero_gap_for_symmetric_specs(self):
        spec = LatentSpec(beta1=[1.0, 1.0], beta2=[1.0, 1.0], beta3=[3.0])
        gap, bound = maxssn_gap_bound(spec)
        assert gap == pytest.approx(0.0, abs=1e-12)
        assert bound == pytest.approx(0.0, abs=1e-12)

    def test_bound_branches(self):
        # steep: |c2 - c1| >= c3, bound = sigma^2 c3 / 4
        steep = LatentSpec(beta1=[1.0], beta2=[3.0], beta3=[1.0])
        _, bound = maxssn_gap_bound(steep)
        assert bound == pytest.approx(0.25)
        # shallow: |c2 - c1| < c3, bound = sigma^2 |c2 - c1| / 4
        shallow = LatentSpec(beta1=[1.0], beta2=[2.0], beta3=[3.0])
        _, bound = maxssn_gap_bound(shallow)
        assert bound == pytest.approx(3.0 / 4.0)

    def test_gap_respects_bound_on_random_specs(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            spec = LatentSpec(
                beta1=rng.uniform(-2, 2, 1),
                beta2=rng.uniform(-2, 2, 2),
                beta3=rng.uniform(-2, 2, 1),
                sigma=float(rng.choice([0.5, 1.0, 2.0])),
            )
            gap, bound = maxssn_gap_bound(spec)
            assert gap >= bound - 1e-9


class TestOracleMinimax:
    def test_agrees_with_closed_form(self):
        rng = np.random.default_rng(19)
        for _ in range(10):
            spec = LatentSpec(
                beta1=rng.uniform(-2, 2, int(rng.integers(1, 3))),
                beta2=rng.uniform(-2, 2, int(rng.integers(1, 3))),
                beta3=rng.uniform(-2, 2, int(rng.integers(1, 3))),
            )
            star, _, _, _ = solve_maxssn(spec)
            o_loss, g1, g2 = oracle_minimax(spec)
            assert o_loss == pytest.approx(star, rel=1e-6)
            np.testing.assert_allclose(g1 + g2, spec.beta3, atol=1e-9)

    def test_rejects_large_d3(self):
        spec = LatentSpec(beta1=[1.0], beta2=[1.0], beta3=np.ones(5))
        with pytest.raises(PreconditionError):
            oracle_minimax(spec)


class TestUnbalancedErrorProfile:
    def test_hand_computed_values(self):
        # 3-4-5 triangles on both sides.
        rms1, rms2 = unbalanced_error_profile(3.0, 3.0, 8.0, 4.0, 1.0)
        assert rms1 == pytest.approx(5.0)
        assert rms2 == pytest.approx(5.0)

    def test_sigma_scales_linearly(self):
        a = unbalanced_error_profile(1.0, 1.0, 10.0, 0.1, 1.0)
        b = unbalanced_error_profile(1.0, 1.0, 10.0, 0.1, 2.0)
        assert b[0] == pytest.approx(2 * a[0])
        assert b[1] == pytest.approx(2 * a[1])
