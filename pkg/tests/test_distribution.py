from fractions import Fraction

import pytest

from src.core.distribution import Distribution, to_probability
from src.core.errors import InvalidInputError


def test_exact_mode_reads_floats_through_repr():
    assert to_probability(0.1) == Fraction(1, 10)
    assert to_probability("1/3") == Fraction(1, 3)


def test_exact_distribution_must_sum_to_one():
    with pytest.raises(InvalidInputError):
        Distribution({"a": Fraction(1, 3), "b": Fraction(1, 3)})


def test_float_mode_tolerates_rounding():
    dist = Distribution({"a": 0.1, "b": 0.2, "c": 0.7}, exact=False)
    assert abs(dist.total() - 1.0) < 1e-12


def test_negative_probability_rejected():
    with pytest.raises(InvalidInputError):
        Distribution({"a": Fraction(3, 2), "b": Fraction(-1, 2)})


def test_zero_entries_leave_the_support():
    dist = Distribution({"a": 1, "b": 0})
    assert dist.support_set() == frozenset({"a"})
    assert dist.prob("b") == 0
    assert dist.is_point()


def test_map_preserves_mass():
    dist = Distribution.uniform(["aa", "ab", "bb"])
    first = dist.map(lambda v: v[0])
    assert first["a"] == Fraction(2, 3)
    assert first.total() == 1


def test_equality_mixes_exact_and_float():
    exact = Distribution({"x": Fraction(1, 3), "y": Fraction(2, 3)})
    approx = Distribution({"x": 1 / 3, "y": 2 / 3}, exact=False)
    assert exact == approx
    assert exact.same_support(approx)
    assert exact != Distribution.point("x")
