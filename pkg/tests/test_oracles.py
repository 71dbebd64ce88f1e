import math
from itertools import product

import numpy as np
import pytest

from actiongraphpy.exceptions import OracleCheckError, OracleRangeError, OracleSizeError
from actiongraphpy.oracles import (
    JointDistribution, PairwiseDecomposition, ProductPolicy, best_product_kl, brute_force_joint_success,
    closed_form_kl, greedy_vs_joint, independent_exactly_one_bound, independent_topk_bound, independent_topk_curve,
    kl_divergence, latent_matching_objective, latent_matching_optimum, pairwise_fit_residual, parity_delta,
    product_success, smooth_distribution, sweep_confirms_maximum,
)
from actiongraphpy.types_models import EnvSpec, GameName


def parity(a):
    return 1.0 if sum(a) % 2 == 0 else 0.0


def test_independent_topk_bound_values():
    assert independent_topk_bound(5, 2) == pytest.approx(0.3456, abs=1e-10)
    assert independent_topk_bound(6, 2) == pytest.approx(240 / 729, abs=1e-10)
    assert independent_topk_bound(4, 4) == pytest.approx(1.0)
    assert sweep_confirms_maximum(6, 2) and sweep_confirms_maximum(5, 2)
    with pytest.raises(OracleRangeError):
        independent_topk_bound(3, 4)
    with pytest.raises(OracleRangeError):
        independent_topk_bound(31, 2)


def test_topk_curve_peaks_at_k_over_n():
    p = np.linspace(0, 1, 1001)
    curve = independent_topk_curve(6, 2, p)
    assert p[int(np.argmax(curve))] == pytest.approx(2 / 6, abs=1e-3)


def test_product_success_cross_checks_bounds():
    topk = product_success(ProductPolicy.bernoulli(6, 2 / 6), lambda a: sum(a) == 2)
    assert topk == pytest.approx(independent_topk_bound(6, 2), abs=1e-12)
    one = product_success(ProductPolicy.bernoulli(4, 1 / 4), lambda a: sum(a) == 1)
    assert one == pytest.approx(independent_exactly_one_bound(4), abs=1e-12)


def test_exactly_one_bound():
    assert independent_exactly_one_bound(2) == pytest.approx(0.5)
    assert independent_exactly_one_bound(4) == pytest.approx(27 / 64)
    values = [independent_exactly_one_bound(n) for n in range(2, 11)]
    assert all(a > b for a, b in zip(values, values[1:]))
    assert values[-1] > 1 / math.e


@pytest.mark.parametrize("n", range(2, 7))
def test_kl_projection_of_one_hot_target(n):
    projection = best_product_kl(JointDistribution.uniform_one_hot(n))
    for m in projection.product.marginals:
        assert m[1] == pytest.approx(1 / n, abs=1e-9)
    assert projection.kl == pytest.approx(closed_form_kl(n), abs=1e-9)
    assert projection.kl >= 1 - 1 / n


def test_closed_form_kl_values():
    assert closed_form_kl(2) == pytest.approx(math.log(2))
    assert closed_form_kl(4) == pytest.approx(3 * math.log(4 / 3))
    assert closed_form_kl(1) == 0.0
    for n in range(2, 11):
        assert closed_form_kl(n) >= 1 - 1 / n


def test_product_target_has_zero_kl():
    product_table = ProductPolicy([np.array([0.3, 0.7]), np.array([0.6, 0.4])]).joint()
    assert best_product_kl(JointDistribution(product_table)).kl == pytest.approx(0.0, abs=1e-12)


def test_kl_divergence_conventions():
    assert kl_divergence(np.array([1.0, 0.0]), np.array([0.5, 0.5])) == pytest.approx(math.log(2))
    assert math.isinf(kl_divergence(np.array([0.5, 0.5]), np.array([1.0, 0.0])))
    with pytest.raises(OracleRangeError):
        kl_divergence(np.ones(2) / 2, np.ones(3) / 3)


def test_smoothing_gives_finite_kl():
    target = JointDistribution.uniform_over([2, 2], [(0, 0), (1, 1)])
    for eps in (0.01, 0.2, 0.9):
        smoothed = smooth_distribution(target, eps)
        assert smoothed.table.min() > 0
        assert math.isfinite(best_product_kl(smoothed).kl)
    with pytest.raises(OracleRangeError):
        smooth_distribution(target, 1.5)


def test_joint_distribution_validation():
    with pytest.raises(OracleRangeError):
        JointDistribution(np.array([0.5, 0.6]))
    with pytest.raises(OracleRangeError):
        JointDistribution(np.array([1.5, -0.5]))


def test_dense_limit():
    big = JointDistribution.uniform_over([2] * 21, [(0,) * 21])
    with pytest.raises(OracleSizeError):
        best_product_kl(big)


def test_parity_delta():
    assert parity_delta(parity) == 4.0
    assert parity_delta(lambda a: 1.0) == 0.0
    table = np.zeros((2, 2, 2))
    table[1, 1, 1] = 1.0
    assert parity_delta(table) == -1.0


def test_parity_delta_is_linear_and_kills_pairwise_functions(rng):
    f, g = rng.normal(size=(2, 2, 2)), rng.normal(size=(2, 2, 2))
    assert parity_delta(2.0 * f - 3.0 * g) == pytest.approx(2.0 * parity_delta(f) - 3.0 * parity_delta(g), abs=1e-12)
    pairwise = PairwiseDecomposition.random(3, rng)
    assert parity_delta(pairwise) == pytest.approx(0.0, abs=1e-12)


def test_pairwise_fit_residual(rng):
    assert pairwise_fit_residual(parity, 3) > 0.1
    for n in (3, 4, 5):
        for _ in range(5):
            assert pairwise_fit_residual(PairwiseDecomposition.random(n, rng).table(), n) < 1e-8
    with pytest.raises(OracleSizeError):
        pairwise_fit_residual(lambda a: 0.0, 13)


def test_exactly_one_table_has_a_third_order_part():
    # 3 a1 a2 a3 term; its projection off the pairwise span is 3/8 of a sign product
    residual = pairwise_fit_residual(lambda a: float(sum(a) == 1), 3)
    assert residual == pytest.approx(0.375, abs=1e-9)


def test_greedy_vs_joint():
    result = greedy_vs_joint([0, 1], [0, 1], [[3, -2], [-2, 0]])
    assert result.greedy == (1, 1) and result.optimal == (0, 0) and not result.match
    assert greedy_vs_joint([0, 1], [2, 0], np.zeros((2, 2))).match


def test_greedy_vs_joint_optimal_matches_enumeration(rng):
    for _ in range(100):
        u1, u2, u12 = rng.normal(size=2), rng.normal(size=2), rng.normal(size=(2, 2))
        best = max(product((0, 1), repeat=2), key=lambda a: u1[a[0]] + u2[a[1]] + u12[a])
        assert greedy_vs_joint(u1, u2, u12).optimal == best


def test_latent_matching_optimum():
    opt = latent_matching_optimum(101)
    assert opt.value == pytest.approx(0.5, abs=1e-12)
    assert (opt.p, opt.q) in {(0.0, 0.0), (1.0, 1.0)}
    assert latent_matching_objective(0.5, 0.5) == pytest.approx(0.25)
    assert latent_matching_optimum(2).value == pytest.approx(0.5)


def test_brute_force_joint_success(rng):
    assert brute_force_joint_success(EnvSpec(game=GameName.TOPK, num_agents=6, top_k=2), 50, rng) == 1.0
    assert brute_force_joint_success(EnvSpec(game=GameName.EXACTLY_ONE, num_agents=4), 10, rng) == 1.0
    latent = EnvSpec(game=GameName.LATENT_MATCHING)
    assert brute_force_joint_success(latent, 40, rng) == 1.0
    assert brute_force_joint_success(latent, 40, rng, hidden_oracle=False) == pytest.approx(0.5)
    with pytest.raises(OracleSizeError):
        brute_force_joint_success(EnvSpec(game=GameName.EXACTLY_ONE, num_agents=13), 1, rng)


def test_gap_between_independent_and_centralized(rng):
    for n, k in [(4, 1), (5, 2), (6, 3)]:
        centralized = brute_force_joint_success(EnvSpec(game=GameName.TOPK, num_agents=n, top_k=k), 5, rng)
        assert independent_topk_bound(n, k) < centralized == 1.0


def test_refinement_check_reports_better_products(monkeypatch):
    import actiongraphpy.oracles as oracles

    monkeypatch.setattr(oracles, "_refinement_gain", lambda *args: 1e-3)
    with pytest.raises(OracleCheckError):
        best_product_kl(JointDistribution.uniform_one_hot(3))
