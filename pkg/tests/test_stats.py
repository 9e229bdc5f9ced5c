import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chi2, chi2_contingency

from src.core.distribution import Distribution
from src.core.errors import BudgetExceededError, ContractError, InvalidInputError
from src.core.stats import (
    ResponseVector,
    TestStatistic,
    attainable_values,
    bh_adjust,
    bh_fdr,
    chi2_2x2,
    conditional_deviates,
    conditionals_differ,
    independence_equals_equality,
    mixture,
    nonce_p_closed,
    permutation_test,
    stat_mean_diff,
    stat_nonce,
)

SEPARATED = ResponseVector([10, 11, 12, 13, 14, 0, 1, 2, 3, 4], 5, 5)


def test_strict_maximum_gives_smallest_partition_p():
    result = permutation_test(stat_mean_diff(), SEPARATED, method="partition")
    assert result.p_fraction == Fraction(1, 252)
    assert result.comparisons == 252


def test_strict_maximum_over_all_permutations():
    y = ResponseVector([10, 11, 12, 0, 1, 2], 3, 3)
    result = permutation_test(stat_mean_diff(), y, method="exact")
    assert result.p_fraction == Fraction(1, 20)
    assert result.comparisons == math.factorial(6)
    assert result.p_fraction == permutation_test(stat_mean_diff(), y, method="partition").p_fraction


def test_swap_symmetric_statistic_bottoms_out_at_one_in_126():
    result = permutation_test(stat_mean_diff(), SEPARATED, tail="two-sided", method="partition")
    assert result.p_fraction == Fraction(1, 126)
    assert abs(result.p_value - 0.007937) < 1e-6


def test_auto_prefers_partition_for_group_symmetric():
    assert permutation_test(stat_mean_diff(), SEPARATED).method == "partition"


def test_tails():
    y = ResponseVector([0, 1, 2, 10, 11, 12], 3, 3)
    low = permutation_test(stat_mean_diff(), y, tail="geq", method="partition")
    assert low.p_fraction == Fraction(1, 20)
    high = permutation_test(stat_mean_diff(), y, tail="leq", method="partition")
    assert high.p_fraction == 1


def test_ties_count_as_at_least_as_extreme():
    y = ResponseVector([1, 1, 1, 1], 2, 2)
    assert permutation_test(stat_mean_diff(), y).p_value == 1.0


def test_monte_carlo_close_to_exact():
    rng = np.random.default_rng(5)
    y = ResponseVector(list(rng.normal(0.4, 1.0, 10)), 5, 5)
    exact = permutation_test(stat_mean_diff(), y, method="partition")
    mc = permutation_test(stat_mean_diff(), y, method="monte-carlo", seed=99, samples=20_000)
    assert mc.comparisons == 20_000
    assert abs(mc.p_value - exact.p_value) <= 4 * max(mc.mc_stderr, 1 / 20_000)


@pytest.mark.parametrize("n, m", [(1, 1), (2, 2), (2, 3), (3, 3), (3, 4), (4, 4)])
def test_exact_and_partition_agree(n, m):
    rng = np.random.default_rng(n * 10 + m)
    stat = stat_mean_diff()
    for _ in range(3):
        # small integers force ties
        y = ResponseVector(list(rng.integers(0, 4, n + m)), n, m)
        for tail in ("leq", "geq", "two-sided"):
            exact = permutation_test(stat, y, tail=tail, method="exact")
            partition = permutation_test(stat, y, tail=tail, method="partition")
            assert exact.p_fraction == partition.p_fraction
            assert exact.comparisons == math.factorial(n + m)
            assert partition.comparisons == math.comb(n + m, n)


def test_monte_carlo_within_four_stderr_over_seeds():
    y = ResponseVector([5, 3, 4, 1, 2, 0, 3], 3, 4)
    stat = stat_mean_diff()
    exact = permutation_test(stat, y, method="exact")
    samples = 2000
    for seed in range(100):
        mc = permutation_test(stat, y, method="monte-carlo", seed=seed, samples=samples)
        assert abs(mc.p_value - exact.p_value) <= 4 * max(mc.mc_stderr, 1 / samples)


@settings(max_examples=50, deadline=None)
@given(
    values=st.lists(st.integers(0, 5), min_size=8, max_size=8),
    seed=st.integers(0, 2**32 - 1),
)
def test_p_value_ignores_order_within_groups(values, seed):
    y = ResponseVector(values, 4, 4)
    rng = np.random.default_rng(seed)
    order = list(rng.permutation(4)) + list(4 + rng.permutation(4))
    relabeled = y.reordered(order)
    stat = stat_mean_diff()
    for tail in ("leq", "geq", "two-sided"):
        assert (
            permutation_test(stat, y, tail=tail, method="partition").p_fraction
            == permutation_test(stat, relabeled, tail=tail, method="partition").p_fraction
        )


def test_monte_carlo_needs_seed():
    with pytest.raises(ContractError):
        permutation_test(stat_mean_diff(), SEPARATED, method="monte-carlo")


def test_partition_requires_group_symmetry():
    with pytest.raises(ContractError):
        permutation_test(stat_nonce("n"), ResponseVector(["n", "a"], 1, 1), method="partition")


def test_exact_budget(monkeypatch):
    monkeypatch.setattr("src.config.EXACT_BUDGET", 100)
    with pytest.raises(BudgetExceededError):
        permutation_test(stat_mean_diff(), SEPARATED, method="exact")


def test_unknown_tail_and_tiny_vectors():
    with pytest.raises(InvalidInputError):
        permutation_test(stat_mean_diff(), SEPARATED, tail="sideways")
    with pytest.raises(InvalidInputError):
        permutation_test(stat_mean_diff(), ResponseVector([1], 1, 0))


def test_response_vector_sizes():
    with pytest.raises(InvalidInputError):
        ResponseVector([1, 2, 3], 1, 1)


def test_attainable_values_of_mean_difference():
    values = attainable_values(stat_mean_diff(), ResponseVector([1, 0, 0, 0], 2, 2))
    assert values == [-0.5, 0.5]


def test_nonce_closed_form_matches_enumeration():
    for size in range(2, 8):
        for mask in itertools.product([False, True], repeat=size - 1):
            responses = ["nonce-42 page"] + ["nonce-42" if hit else "plain" for hit in mask]
            y = ResponseVector(responses, 1, size - 1)
            result = permutation_test(stat_nonce("nonce-42"), y, method="exact")
            assert result.p_fraction == nonce_p_closed(y, "nonce-42")


@pytest.mark.parametrize("size,others", [(100, 10), (50, 4)])
def test_nonce_closed_form_large(size, others):
    responses = [["nonce"]] + [["nonce"] if i < others else ["ad"] for i in range(size - 1)]
    y = ResponseVector(responses, 1, size - 1)
    assert nonce_p_closed(y, "nonce") == Fraction(1 + others, size)
    mc = permutation_test(stat_nonce("nonce"), y, seed=1, samples=20_000)
    assert mc.method == "monte-carlo"
    assert abs(mc.p_value - (1 + others) / size) <= 4 * mc.mc_stderr


def test_nonce_closed_form_needs_nonce_first():
    with pytest.raises(ContractError):
        nonce_p_closed(ResponseVector(["plain", "nonce"], 1, 1), "nonce")


def test_chi2_matches_scipy():
    table = [[30, 10], [12, 28]]
    value, p = chi2_2x2(table)
    expected, expected_p, _, _ = chi2_contingency(np.array(table), correction=False)
    assert value == pytest.approx(expected)
    assert p == pytest.approx(expected_p)
    corrected, _ = chi2_2x2(table, correction=True)
    assert corrected < value


def test_chi2_closed_form_tables():
    value, p = chi2_2x2([[10, 0], [0, 10]])
    assert value == pytest.approx(20.0)
    assert p == pytest.approx(chi2.sf(20.0, 1), abs=1e-6)
    assert p == pytest.approx(7.744e-06, rel=1e-3)

    value, p = chi2_2x2([[5, 5], [5, 5]])
    assert value == 0.0
    assert p == 1.0


def test_chi2_yates_correction():
    # (|ad - bc| - N/2)^2 N / product of marginals
    value, p = chi2_2x2([[10, 0], [0, 10]], correction=True)
    assert value == pytest.approx(16.2)
    assert p == pytest.approx(chi2.sf(16.2, 1))

    value, p = chi2_2x2([[5, 5], [5, 5]], correction=True)
    assert value == pytest.approx(0.0)
    assert p == pytest.approx(1.0)


def test_chi2_rejects_zero_marginal():
    with pytest.raises(ContractError):
        chi2_2x2([[0, 5], [0, 7]])


def test_benjamini_hochberg():
    assert bh_fdr([0.01, 0.02, 0.03, 0.20], 0.05) == [True, True, True, False]
    assert bh_fdr([0.01, 0.04, 0.03, 0.20], 0.05) == [True, False, False, False]
    assert bh_fdr([0.02, 0.5], 0.05) == [True, False]
    assert list(bh_adjust([0.01, 0.04, 0.03, 0.20])) == pytest.approx([0.04, 0.16 / 3, 0.16 / 3, 0.20])
    assert bh_fdr([]) == []


def test_independence_iff_conditionals_equal():
    grid = [Fraction(0), Fraction(1, 3), Fraction(1, 2), Fraction(1)]
    for a, b, c in itertools.product(grid, repeat=3):
        conds = [Distribution({"x": a, "y": 1 - a}), Distribution({"x": b, "y": 1 - b}), Distribution({"x": c, "y": 1 - c})]
        weights = [Fraction(1, 2), Fraction(1, 4), Fraction(1, 4)]
        assert independence_equals_equality(conds, weights)
        assert conditionals_differ(conds) == (len({a, b, c}) > 1)
    same = [Distribution.point("x")] * 2
    assert not conditional_deviates(same, [Fraction(1, 2), Fraction(1, 2)])
    assert mixture(same, [Fraction(1, 2), Fraction(1, 2)]) == Distribution.point("x")


def test_null_calibration():
    """Under exchangeable responses P(p <= 0.05) stays within 3 sigma of 0.05"""
    rng = np.random.default_rng(2015)
    trials = 2000
    stat = stat_mean_diff()
    rejections = 0
    for _ in range(trials):
        y = ResponseVector(list(rng.normal(size=10)), 5, 5)
        if permutation_test(stat, y, method="partition").p_value <= 0.05:
            rejections += 1
    limit = 0.05 + 3 * math.sqrt(0.05 * 0.95 / trials)
    assert rejections / trials <= limit


def test_statistic_is_callable():
    stat = TestStatistic("first", float, lambda f, n, m: f[0], group_symmetric=False)
    assert stat(ResponseVector([3, 1], 1, 1)) == 3.0
