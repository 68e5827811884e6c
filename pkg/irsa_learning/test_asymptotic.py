"""
测试渐近分析：密度演化、瀑布门限、译码分布与先验矩
"""

import math
import os
import sys

sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

import numpy as np
import pytest

from irsa_learning.asymptotic import (
    DensityEvolutionParams,
    analyze_arms,
    asymptotic_optimize,
    binary_packet_loss,
    decode_pmf,
    density_evolution_pe,
    expected_utility,
    expected_utility_from_success,
    packet_loss,
    prior_moments,
    prior_moments_from_success,
    waterfall_threshold,
)
from irsa_learning.irsa import ConstraintViolation, DegreeDistribution, ScenarioConfig, TransmissionStrategy

DEFAULT = DegreeDistribution.from_mapping({2: 0.75, 3: 0.25})
DISTRIBUTIONS = [
    DegreeDistribution.from_mapping({2: 1.0}),
    DEFAULT,
    DegreeDistribution.from_mapping({3: 1.0}),
    DegreeDistribution.from_mapping({2: 0.5, 3: 0.25, 8: 0.25}),
    DegreeDistribution.from_mapping({2: 0.5, 3: 0.28, 8: 0.22}),
]


class TestDensityEvolution:
    def test_degree_one_closed_form(self):
        # Λ(x) = x 时 P_e = 1 - exp(-G)
        lam = DegreeDistribution.from_mapping({1: 1.0})
        for G in (0.1, 0.5, 1.0):
            result = density_evolution_pe(lam, G)
            assert result.p_loss == pytest.approx(-math.expm1(-G), rel=1e-12)
            assert result.converged
            assert result.iterations_used == 2

    def test_history_non_increasing(self):
        result = density_evolution_pe(DEFAULT, 0.8)
        assert result.history[0] == 1.0
        assert np.all(np.diff(result.history) <= 0.0)
        assert not result.history.flags.writeable

    def test_non_positive_load_rejected(self):
        with pytest.raises(ValueError):
            density_evolution_pe(DEFAULT, 0.0)

    def test_not_converged(self):
        result = density_evolution_pe(DEFAULT, 0.3, DensityEvolutionParams(max_iterations=1))
        assert not result.converged
        assert result.iterations_used == 1
        assert 0.0 <= result.p_loss <= 1.0

    @pytest.mark.parametrize("lam", DISTRIBUTIONS, ids=str)
    def test_monotone_in_load(self, lam):
        grid = np.linspace(0.02, 1.0, 50)
        losses = np.array([density_evolution_pe(lam, G).p_loss for G in grid])
        assert np.all((losses >= 0.0) & (losses <= 1.0))
        assert np.all(np.diff(losses) >= -1e-9)


class TestWaterfallThreshold:
    def test_regular_degree_two(self):
        assert waterfall_threshold(DegreeDistribution.from_mapping({2: 1.0})) == pytest.approx(0.5, abs=0.01)

    def test_sharp_transition(self):
        g_star = waterfall_threshold(DEFAULT)
        assert 0.6 < g_star < 0.75
        assert density_evolution_pe(DEFAULT, g_star - 0.1).p_loss < 1e-6
        assert density_evolution_pe(DEFAULT, g_star + 0.1).p_loss > 0.2

    def test_degree_one_never_passes(self):
        # Λ(x) = x 在 G=1e-4 时 P_e ≈ 1e-4 > δ
        params = DensityEvolutionParams(loss_threshold=1e-6)
        assert waterfall_threshold(DegreeDistribution.from_mapping({1: 1.0}), params) == 0.0

    def test_loose_threshold_returns_one(self):
        params = DensityEvolutionParams(loss_threshold=1.0)
        assert waterfall_threshold(DEFAULT, params) == 1.0

    def test_binary_approximation(self):
        g_star = waterfall_threshold(DEFAULT)
        assert binary_packet_loss(DEFAULT, g_star * 0.9) == 0.0
        assert binary_packet_loss(DEFAULT, min(1.0, g_star + 0.05)) == 1.0
        assert packet_loss(DEFAULT, g_star * 0.9, pe_mode="binary") == 0.0
        with pytest.raises(ValueError):
            packet_loss(DEFAULT, 0.5, pe_mode="exact")


class TestDecodePmf:
    def test_probability_hygiene(self):
        for K in range(1, 65):
            for p in np.linspace(0.0, 1.0, 101):
                pmf = decode_pmf(float(p), K)
                assert len(pmf) == K + 1
                assert abs(pmf.sum() - 1.0) <= 1e-12
                assert np.all(pmf >= 0.0)

    def test_degenerate_success(self):
        np.testing.assert_allclose(decode_pmf(1.0, 4), [0, 0, 0, 0, 1])
        np.testing.assert_allclose(decode_pmf(0.0, 4), [1, 0, 0, 0, 0])

    def test_binomial_values(self):
        np.testing.assert_allclose(decode_pmf(0.5, 2), [0.25, 0.5, 0.25])

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            decode_pmf(1.2, 3)
        with pytest.raises(ValueError):
            decode_pmf(0.5, 0)


class TestPriorMoments:
    def test_closed_form(self):
        m = prior_moments_from_success(0.5, 4, w=2.0)
        assert m.mu == pytest.approx(2.0 * math.log(3.0))
        assert m.sigma2 == pytest.approx(4.0 * 2.0 * 0.5 / 9.0)

    def test_certain_success_has_zero_variance(self):
        m = prior_moments_from_success(1.0, 7)
        assert m.mu == pytest.approx(math.log(8.0))
        assert m.sigma2 == 0.0

    def test_certain_loss(self):
        m = prior_moments_from_success(0.0, 7)
        assert m.mu == 0.0 and m.sigma2 == 0.0

    def test_agrees_with_monte_carlo(self):
        rng = np.random.default_rng(20170901)
        for K in (1, 3, 5, 7, 10):
            for p in (0.3, 0.6, 0.9, 1.0):
                samples = np.log1p(rng.binomial(K, p, size=1_000_000))
                m = prior_moments_from_success(p, K)
                assert abs(m.mu - samples.mean()) <= 0.15, (K, p)
                assert abs(m.sigma2 - samples.var()) <= 0.1, (K, p)

    def test_prior_moments_from_scenario(self):
        cfg = ScenarioConfig(L=20, M=300)
        m = prior_moments(DEFAULT, 5, cfg)
        p_e = density_evolution_pe(DEFAULT, 20 * 5 / 300).p_loss
        assert m == prior_moments_from_success(1.0 - p_e, 5)
        with pytest.raises(ConstraintViolation):
            prior_moments(DEFAULT, 16, cfg)

    def test_worked_example(self):
        m = prior_moments_from_success(0.5, 5)
        assert m.mu == pytest.approx(1.2528, abs=1e-4)
        assert m.sigma2 == pytest.approx(0.1020, abs=1e-4)

    @pytest.mark.parametrize("w", [1.0, 2.5])
    def test_mean_within_utility_range(self, w):
        for K in range(1, 16):
            for p in np.linspace(0.0, 1.0, 21):
                m = prior_moments_from_success(float(p), K, w=w)
                assert 0.0 <= m.mu <= w * math.log(K + 1) + 1e-12
                assert m.sigma2 >= 0.0

    def test_scenario_priors_within_utility_range(self):
        cfg = ScenarioConfig(L=20, M=300)
        for lam in DISTRIBUTIONS:
            for K in range(1, 16):
                for pe_mode in ("density_evolution", "binary"):
                    m = prior_moments(lam, K, cfg, pe_mode=pe_mode)
                    assert 0.0 <= m.mu <= math.log(K + 1) + 1e-12


class TestAsymptoticOptimize:
    def test_returns_argmax_of_expected_utility(self):
        cfg = ScenarioConfig(L=20, M=300)
        arms = [TransmissionStrategy(DEFAULT, K) for K in range(1, 16)]
        best = asymptotic_optimize(arms, cfg)
        values = [expected_utility(a.lam, a.K, cfg) for a in arms]
        assert best == int(np.argmax(values))
        # 门限以下 P_e ≈ 0，最优 K 不低于门限对应的包数
        assert arms[best].K >= int(waterfall_threshold(DEFAULT) * 300 / 20)

    def test_default_scenario_reference_values(self):
        # 当前模型下 G* ≈ 0.6665，渐近最优 K=10，门限两侧 P_e 差约 0.29
        g_star = waterfall_threshold(DEFAULT)
        assert g_star == pytest.approx(0.6665, abs=2e-3)
        cfg = ScenarioConfig(L=20, M=300)
        arms = [TransmissionStrategy(DEFAULT, K) for K in range(1, 16)]
        assert arms[asymptotic_optimize(arms, cfg)].K == 10
        jump = density_evolution_pe(DEFAULT, g_star + 0.1).p_loss - density_evolution_pe(DEFAULT, g_star - 0.1).p_loss
        assert 0.25 < jump < 0.33

    def test_ties_resolved_to_lowest_id(self):
        cfg = ScenarioConfig(L=2, M=10)
        arms = [TransmissionStrategy(DEFAULT, 2)] * 3
        assert asymptotic_optimize(arms, cfg) == 0

    def test_empty_arm_set(self):
        with pytest.raises(ConstraintViolation):
            asymptotic_optimize([], ScenarioConfig(L=1, M=1))

    def test_expected_utility_matches_pmf(self):
        assert expected_utility_from_success(0.5, 2) == pytest.approx(0.5 * math.log(2) + 0.25 * math.log(3))

    def test_analyze_arms_rows(self):
        cfg = ScenarioConfig(L=20, M=300)
        arms = [TransmissionStrategy(DEFAULT, K) for K in (1, 7, 15)]
        rows = analyze_arms(arms, cfg)
        assert [r["arm_id"] for r in rows] == [0, 1, 2]
        assert rows[2]["G"] == pytest.approx(1.0)
        for row in rows:
            assert 0.0 <= row["p_loss"] <= 1.0
            assert row["g_star"] == waterfall_threshold(DEFAULT)
            assert row["lambda"] == "0.75x^2+0.25x^3"
