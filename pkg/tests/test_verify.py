"""Verification suites pass on the real code and catch planted mutations."""

import numpy as np

from fusionrobust.verify import (
    run_adversarial_suite,
    run_gradient_suite,
    run_linear_suite,
    run_suites,
    random_adv_specs,
    random_latent_specs,
    straddling_adv_specs,
)


class TestSpecGenerators:
    def test_latent_specs_match_declared_distribution(self):
        specs = random_latent_specs(50)
        assert len(specs) == 50
        for spec in specs:
            assert max(spec.d1, spec.d2, spec.d3) <= 3
            assert spec.sigma in (0.5, 1.0, 2.0)
            for beta in (spec.beta1, spec.beta2, spec.beta3):
                assert np.all(np.abs(beta) <= 2.0)

    def test_adv_specs_have_budgets(self):
        for spec in random_adv_specs(20):
            assert spec.epsilon in (0.5, 1.0, 2.0)

    def test_straddling_specs_cover_both_branches(self):
        specs = straddling_adv_specs(20)
        assert len(specs) == 20
        ratios = []
        for spec in specs:
            c1 = float(np.abs(spec.beta1).sum())
            c2 = float(np.abs(spec.beta2).sum())
            c3 = float(np.abs(spec.beta3).sum())
            ratios.append(abs(c2 - c1) / c3)
        assert sum(1 for r in ratios if r == 0.0) == 10
        assert sum(1 for r in ratios if r > 1.0) == 10

    def test_generators_are_deterministic(self):
        a = random_latent_specs(5)
        b = random_latent_specs(5)
        for x, y in zip(a, b):
            np.testing.assert_array_equal(x.beta1, y.beta1)


class TestSuitesPass:
    def test_linear_suite(self):
        report = run_linear_suite(n_specs=30)
        assert report.passed, "\n".join(report.lines())

    def test_adversarial_suite(self):
        report = run_adversarial_suite(n_specs=30)
        assert report.passed, "\n".join(report.lines())

    def test_gradient_suite(self):
        report = run_gradient_suite(instantiations=3)
        assert report.passed, "\n".join(report.lines())
        assert len(report.checks) == 10


class TestMutationSensitivity:
    def test_linear_mutation_detected(self):
        assert not run_linear_suite(n_specs=10, mutate=True).passed

    def test_adversarial_mutation_detected(self):
        assert not run_adversarial_suite(n_specs=10, mutate=True).passed

    def test_gradient_mutation_detected(self):
        report = run_gradient_suite(instantiations=2, mutate=True)
        broken = {c.name for c in report.checks if not c.passed}
        assert any("relu" in name for name in broken)


class TestRunSuites:
    def test_all_runs_three_suites(self):
        reports = run_suites("all")
        assert [r.suite for r in reports] == ["linear", "adversarial", "gradients"]
        assert all(r.passed for r in reports)

    def test_single_suite_selection(self):
        reports = run_suites("linear")
        assert len(reports) == 1
        assert reports[0].suite == "linear"

    def test_report_lines_are_printable(self):
        report = run_linear_suite(n_specs=5)
        lines = report.lines()
        assert lines[0].startswith("suite linear:")
        assert all(isinstance(line, str) for line in lines)
