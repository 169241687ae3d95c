import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from peaqlab.errors import ConstantInput, LengthMismatch, NonPositiveCI, TooFewSamples
from peaqlab.evalharness import aes, aggregate_ci, pearson, spearman


def test_pearson_examples():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0, abs=1e-15)
    assert pearson([1, 2, 3], [6, 4, 2]) == pytest.approx(-1.0, abs=1e-15)
    assert pearson([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-12)


def test_spearman_examples():
    assert spearman([1, 2, 3], [10, 20, 30]) == pytest.approx(1.0)
    assert spearman([1, 2, 3], [30, 20, 10]) == pytest.approx(-1.0)
    assert spearman([1, 2, 3, 4], [1, 1, 2, 3]) == pytest.approx(0.948683, abs=1e-6)


def test_spearman_hand_ranked_oracle():
    # ranks of [1, 1, 2, 3] are [1.5, 1.5, 3, 4]
    assert spearman([1, 2, 3, 4], [1, 1, 2, 3]) == pytest.approx(pearson([1, 2, 3, 4], [1.5, 1.5, 3, 4]))


def test_metric_errors():
    with pytest.raises(ConstantInput):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(LengthMismatch):
        pearson([1, 2], [1, 2, 3])
    with pytest.raises(NonPositiveCI):
        aes([1, 2], [1, 2], [1, 0])
    with pytest.raises(LengthMismatch):
        aes([1, 2], [1, 2], [1])
    with pytest.raises(TooFewSamples):
        aggregate_ci([0.5])


def test_aes_examples():
    assert aes([3, 4, 5], [3, 4, 5], [1, 2, 3]) == 0.0
    assert aes([12, 24], [10, 20], [2, 2]) == pytest.approx(1.581139, abs=1e-6)


def test_aes_direct_sum(rng):
    o, s, c = rng.normal(50, 20, 50), rng.normal(50, 20, 50), rng.uniform(1, 10, 50)
    total = 0.0
    for oi, si, ci in zip(o, s, c):
        total += (abs(oi - si) / ci) ** 2
    assert aes(o, s, c) == pytest.approx((total / 50) ** 0.5, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.integers(2, 60))
def test_aes_halves_when_ci_doubles(seed, n):
    rng = np.random.default_rng(seed)
    o, s, c = rng.normal(size=n), rng.normal(size=n), rng.uniform(0.5, 5, n)
    assert aes(o, s, 2 * c) == aes(o, s, c) / 2


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.01, 100), st.floats(-100, 100))
def test_pearson_affine_invariance(seed, scale, shift):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=20), rng.normal(size=20)
    assert pearson(scale * x + shift, y) == pytest.approx(pearson(x, y), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_spearman_monotone_invariance(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=25), rng.normal(size=25)
    assert spearman(np.exp(3 * x), y) == pytest.approx(spearman(x, y), abs=1e-12)
    assert spearman(x**3 + x, y) == pytest.approx(spearman(x, y), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6))
def test_agrees_with_scipy(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=30), np.round(rng.normal(size=30), 1)
    assert pearson(x, y) == pytest.approx(stats.pearsonr(x, y)[0], abs=1e-12)
    assert spearman(x, y) == pytest.approx(stats.spearmanr(x, y)[0], abs=1e-12)


def test_aggregate_ci_examples():
    assert aggregate_ci([0.8] * 10) == (pytest.approx(0.8), 0.0)
    mean, half = aggregate_ci([0.0, 1.0])
    assert mean == 0.5
    assert half == pytest.approx(0.98, abs=1e-12)


def test_aggregate_ci_sqrt_n_scaling():
    rng = np.random.default_rng(2024)
    _, h1 = aggregate_ci(rng.normal(size=2000))
    _, h2 = aggregate_ci(rng.normal(size=8000))
    assert h2 / h1 == pytest.approx(0.5, rel=0.15)


def test_aggregate_ci_percentile():
    mean, half = aggregate_ci(np.arange(1001.0), method="percentile")
    assert mean == 500.0
    assert half == pytest.approx(475.0)
