import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsn.corruption import (
    AdditiveGaussian,
    LocalUniform,
    SaltPepper,
    SubsetMask,
    corrupt,
    density,
)
from gsn.errors import DomainError, ParameterError, UnsupportedCorruptorError
from gsn.numkit import RngStream

# 99.9% chi-squared quantiles used by the histogram checks below.
CHI2_99_9 = {3: 16.266, 15: 37.697}


def test_saltpepper_rejects_bad_rate():
    with pytest.raises(ParameterError):
        SaltPepper(-0.1)
    with pytest.raises(ParameterError):
        SaltPepper(1.2)


def test_saltpepper_requires_binary_input():
    with pytest.raises(DomainError):
        corrupt(SaltPepper(0.3), np.array([0.0, 0.4]), RngStream(0))


def test_saltpepper_output_is_binary_and_batch_shaped():
    x = (RngStream(1).uniform((8, 10)) < 0.5).astype(np.float64)
    out = corrupt(SaltPepper(0.4), x, RngStream(2))
    assert out.shape == x.shape
    assert np.all((out == 0.0) | (out == 1.0))


def test_saltpepper_rate_zero_is_identity():
    x = (RngStream(3).uniform(30) < 0.5).astype(np.float64)
    assert np.array_equal(corrupt(SaltPepper(0.0), x, RngStream(4)), x)


def test_saltpepper_flip_frequency():
    # A bit changes value iff selected and the coin disagrees: rate/2.
    rate = 0.4
    x = np.zeros(200_000)
    out = corrupt(SaltPepper(rate), x, RngStream(5))
    assert abs(out.mean() - rate / 2) < 0.005


def test_saltpepper_pair_histogram_chi2():
    # Joint outcomes of two bits, start (0, 1): each coordinate changes
    # independently with probability rate/2.
    rate = 0.5
    n = 40_000
    x = np.tile([0.0, 1.0], (n, 1))
    out = corrupt(SaltPepper(rate), x, RngStream(6))
    cells = (out[:, 0] * 2 + out[:, 1]).astype(int)
    counts = np.bincount(cells, minlength=4)
    q = rate / 2
    probs = np.array([(1 - q) * q, (1 - q) * (1 - q), q * q, q * (1 - q)])
    chi2 = float(np.sum((counts - n * probs) ** 2 / (n * probs)))
    assert chi2 < CHI2_99_9[3]


@pytest.mark.parametrize(
    "x_tilde,x,expected",
    [
        ([0.0], [0.0], 0.75),
        ([1.0], [0.0], 0.25),
        ([0.0, 1.0], [0.0, 0.0], 0.75 * 0.25),
        ([0.5], [0.0], 0.0),
    ],
)
def test_saltpepper_density_frozen_values(x_tilde, x, expected):
    assert density(SaltPepper(0.5), np.array(x_tilde), np.array(x)) == pytest.approx(
        expected, abs=1e-15
    )


def test_saltpepper_density_sums_to_one_over_outcomes():
    c = SaltPepper(0.3)
    x = np.array([1.0, 0.0, 1.0])
    total = 0.0
    for code in range(8):
        xt = np.array([(code >> j) & 1 for j in range(3)], dtype=np.float64)
        total += density(c, xt, x)
    assert total == pytest.approx(1.0, abs=1e-12)


def test_gaussian_rejects_bad_sigma():
    with pytest.raises(ParameterError):
        AdditiveGaussian(0.0)


def test_gaussian_moments():
    x = np.full(100_000, 2.5)
    out = corrupt(AdditiveGaussian(0.7), x, RngStream(7))
    assert abs(out.mean() - 2.5) < 0.01
    assert abs(out.std() - 0.7) < 0.01


def test_gaussian_histogram_chi2():
    # Standardized noise against 16 equiprobable bins of the normal cdf.
    sigma = 1.3
    n = 64_000
    out = corrupt(AdditiveGaussian(sigma), np.zeros(n), RngStream(8))
    z = out / sigma
    # Quantiles of the standard normal at k/16, precomputed.
    edges = [
        -1.5341, -1.1503, -0.8871, -0.6745, -0.4888, -0.3186, -0.1573,
        0.0, 0.1573, 0.3186, 0.4888, 0.6745, 0.8871, 1.1503, 1.5341,
    ]
    counts = np.bincount(np.searchsorted(edges, z), minlength=16)
    expected = n / 16
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < CHI2_99_9[15]


def test_gaussian_density_frozen_value():
    # d=2, sigma=2, diff=(1, 2): (2 pi sigma^2)^(-1) exp(-5/8).
    val = density(AdditiveGaussian(2.0), np.array([1.0, 2.0]), np.array([0.0, 0.0]))
    expected = math.exp(-5.0 / 8.0) / (2.0 * math.pi * 4.0)
    assert val == pytest.approx(expected, rel=1e-12)


def test_gaussian_density_peak_at_clean_point():
    c = AdditiveGaussian(0.5)
    x = np.array([0.3, -0.7])
    peak = density(c, x, x)
    assert peak == pytest.approx(1.0 / (2.0 * math.pi * 0.25), rel=1e-12)
    assert density(c, x + 0.1, x) < peak


def test_local_uniform_stays_within_epsilon():
    c = LocalUniform(0.25)
    x = RngStream(9).normal(5000)
    out = corrupt(c, x, RngStream(10))
    assert np.max(np.abs(out - x)) <= 0.25


def test_local_uniform_quartile_chi2():
    eps = 0.5
    n = 40_000
    out = corrupt(LocalUniform(eps), np.zeros(n), RngStream(11))
    counts = np.bincount(np.searchsorted([-0.25, 0.0, 0.25], out), minlength=4)
    expected = n / 4
    chi2 = float(np.sum((counts - expected) ** 2 / expected))
    assert chi2 < CHI2_99_9[3]


def test_local_uniform_density_support():
    c = LocalUniform(0.2)
    x = np.zeros(3)
    inside = density(c, np.array([0.1, -0.1, 0.0]), x)
    assert inside == pytest.approx((2 * 0.2) ** -3, rel=1e-12)
    assert density(c, np.array([0.1, 0.3, 0.0]), x) == 0.0


def test_subset_mask_marks_requested_holes():
    x = np.arange(10, dtype=np.float64)
    masked, subset = corrupt(SubsetMask(4), x, RngStream(12))
    assert subset.shape == (4,)
    assert np.array_equal(subset, np.sort(subset))
    assert np.all(np.isnan(masked[subset]))
    keep = np.setdiff1d(np.arange(10), subset)
    assert np.array_equal(masked[keep], x[keep])


def test_subset_mask_covers_all_indices_eventually():
    seen = set()
    rng = RngStream(13)
    for _ in range(200):
        _, subset = corrupt(SubsetMask(2), np.zeros(5), rng)
        seen.update(subset.tolist())
    assert seen == set(range(5))


def test_subset_mask_errors():
    with pytest.raises(ParameterError):
        SubsetMask(0)
    with pytest.raises(ParameterError):
        corrupt(SubsetMask(6), np.zeros(5), RngStream(0))
    with pytest.raises(DomainError):
        corrupt(SubsetMask(1), np.zeros((2, 3)), RngStream(0))
    with pytest.raises(UnsupportedCorruptorError):
        density(SubsetMask(1), np.zeros(3), np.zeros(3))


def test_density_shape_validation():
    with pytest.raises(DomainError):
        density(SaltPepper(0.5), np.zeros(3), np.zeros(4))
    with pytest.raises(DomainError):
        density(AdditiveGaussian(1.0), np.zeros((2, 2)), np.zeros((2, 2)))


@given(
    rate=st.floats(min_value=0.05, max_value=0.95),
    seed=st.integers(min_value=0, max_value=10_000),
)
@settings(max_examples=30, deadline=None)
def test_saltpepper_density_normalized_property(rate, seed):
    rng = RngStream(seed)
    x = (rng.uniform(4) < 0.5).astype(np.float64)
    c = SaltPepper(rate)
    total = sum(
        density(c, np.array([(code >> j) & 1 for j in range(4)], dtype=np.float64), x)
        for code in range(16)
    )
    assert abs(total - 1.0) < 1e-10


@given(
    eps=st.floats(min_value=0.01, max_value=2.0),
    seed=st.integers(min_value=0, max_value=10_000),
)
@settings(max_examples=30, deadline=None)
def test_local_uniform_support_property(eps, seed):
    rng = RngStream(seed)
    x = rng.normal(6)
    out = corrupt(LocalUniform(eps), x, rng)
    assert np.max(np.abs(out - x)) <= eps
    assert density(LocalUniform(eps), out, x) > 0.0
