import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mwchart.distributions import DistributionSpec, UNIFORM
from mwchart.errors import InvalidInputError
from mwchart.mw_stat import (
    CellProbabilities,
    ReferenceSample,
    TestSample,
    TiePolicy,
    cell_counts,
    cell_probabilities,
    mann_whitney,
    mann_whitney_doubled,
)

small_ints = st.lists(st.integers(-5, 5), min_size=1, max_size=8)


def brute(x, y, tie):
    s = 0.0
    for xi in x:
        for yj in y:
            s += 1.0 if xi < yj else (0.5 if xi == yj and tie == "midrank" else 0.0)
    return s


@pytest.mark.parametrize("x, y, tie, expected", [
    ((3, 4), (1, 2), "strict", 0),
    ((1, 3, 5), (2, 4), "strict", 3),
    ((1, 2), (2, 3), "midrank", 3.5),
])
def test_hand_values(x, y, tie, expected):
    assert mann_whitney(x, y, tie) == expected


@settings(max_examples=200, deadline=None)
@given(small_ints, small_ints, st.sampled_from(["strict", "midrank"]))
def test_matches_pair_count(x, y, tie):
    assert mann_whitney(x, y, tie) == brute(x, y, tie)
    assert mann_whitney_doubled(x, y, tie) == int(2 * brute(x, y, tie))


@settings(max_examples=100, deadline=None)
@given(small_ints, small_ints)
def test_midrank_antisymmetry(x, y):
    assert mann_whitney(x, y) + mann_whitney(y, x) == len(x) * len(y)


@settings(max_examples=100, deadline=None)
@given(small_ints, small_ints, st.integers(1, 4))
def test_shift_monotone(x, y, c):
    shifted = [v + c for v in y]
    for tie in TiePolicy:
        assert mann_whitney(x, shifted, tie) >= mann_whitney(x, y, tie)


def test_cell_counts():
    assert list(cell_counts((1, 3, 5), (2, 4))) == [1, 2]
    assert list(cell_counts((1, 2), (0.5, 0.7))) == [0, 0]
    rng = np.random.default_rng(3)
    for _ in range(50):
        x, y = rng.normal(size=6), rng.normal(size=3)
        assert cell_counts(x, y).sum() == mann_whitney(x, y, "strict")


def test_reference_sample_sorted_and_frozen():
    r = ReferenceSample([3.0, 1.0, 2.0])
    assert r.m == 3
    assert list(r.sorted_values) == [1.0, 2.0, 3.0]
    with pytest.raises(ValueError):
        r.sorted_values[0] = 9.0


@pytest.mark.parametrize("bad", [[], [1.0, float("nan")], [float("inf")]])
def test_invalid_samples(bad):
    with pytest.raises(InvalidInputError):
        ReferenceSample(bad)
    with pytest.raises(InvalidInputError):
        TestSample(bad)


def test_test_sample_index():
    assert TestSample([1.0], index=4).index == 4
    with pytest.raises(InvalidInputError):
        TestSample([1.0], index=0)


def test_cell_probabilities_examples():
    a = cell_probabilities([1 / 3, 2 / 3], UNIFORM).a
    np.testing.assert_allclose(a, [1 / 3] * 3, atol=1e-15)
    a = cell_probabilities([0.0], DistributionSpec("normal")).a
    np.testing.assert_allclose(a, [0.5, 0.5])
    m = 9
    q = np.arange(1, m + 1) / (m + 1)
    np.testing.assert_allclose(cell_probabilities(q, UNIFORM).a, CellProbabilities.uniform_fixed(m).a, atol=1e-15)


def test_probability_integral_transform():
    # cells do not change when x and the distribution are mapped together
    rng = np.random.default_rng(0)
    x = rng.normal(size=20)
    a_norm = cell_probabilities(x, DistributionSpec("normal")).a
    from scipy.special import ndtr
    a_unif = cell_probabilities(ndtr(x), UNIFORM).a
    np.testing.assert_allclose(a_norm, a_unif, atol=1e-13)
    assert abs(a_norm.sum() - 1) < 1e-12


def test_cell_probability_validation():
    with pytest.raises(InvalidInputError):
        CellProbabilities([0.5, 0.6])
    with pytest.raises(InvalidInputError):
        CellProbabilities([1.0])
    with pytest.raises(InvalidInputError):
        CellProbabilities([1.5, -0.5])
    c = CellProbabilities([0.2, 0.3, 0.5])
    assert list(c.reversed().a) == [0.5, 0.3, 0.2]
    assert c.m == 2
