"""Kernel density scoring tests with hand-computed mixtures."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsn.errors import DomainError, ParameterError, ShapeError
from gsn.numkit import RngStream
from gsn.parzen import (
    DEFAULT_SIGMA_GRID,
    ParzenModel,
    crossval_sigma,
    histogram_tv,
    loglik,
    mean_loglik,
)


def naive_loglik(centers, sigma, data):
    # direct mixture density, no log-sum-exp
    out = []
    for x in data:
        total = 0.0
        for c in centers:
            sq = float(np.sum((x - c) ** 2))
            d = len(x)
            total += np.exp(-sq / (2 * sigma**2)) / (2 * np.pi * sigma**2) ** (d / 2)
        out.append(np.log(total / len(centers)))
    return np.array(out)


def test_single_center_standard_normal():
    model = ParzenModel(centers=np.zeros((1, 1)), sigma=1.0)
    ll = loglik(model, np.array([[0.0], [1.0], [-2.0]]))
    expected = np.array([0.0, -0.5, -2.0]) - 0.5 * np.log(2 * np.pi)
    np.testing.assert_allclose(ll, expected, atol=1e-12)


def test_two_center_mixture_hand_value():
    model = ParzenModel(centers=np.array([[0.0], [2.0]]), sigma=1.0)
    ll = loglik(model, np.array([[0.0]]))
    expected = np.log((1.0 + np.exp(-2.0)) / (2.0 * np.sqrt(2.0 * np.pi)))
    np.testing.assert_allclose(ll, [expected], atol=1e-12)


def test_multivariate_hand_value():
    model = ParzenModel(centers=np.array([[1.0, 1.0]]), sigma=2.0)
    ll = loglik(model, np.array([[0.0, 0.0]]))
    np.testing.assert_allclose(ll, [-0.25 - np.log(8 * np.pi)], atol=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_matches_naive_mixture(seed):
    rng = RngStream(seed)
    centers = rng.normal(15).reshape(5, 3)
    data = rng.normal(12).reshape(4, 3)
    sigma = 0.5 + float(rng.uniform())
    model = ParzenModel(centers=centers, sigma=sigma)
    np.testing.assert_allclose(loglik(model, data), naive_loglik(centers, sigma, data), atol=1e-10)


@pytest.mark.parametrize("chunk", [1, 3, 7, 1000])
def test_chunking_does_not_change_scores(chunk):
    rng = RngStream(9)
    model = ParzenModel(centers=rng.normal(20).reshape(10, 2), sigma=0.7)
    data = rng.normal(26).reshape(13, 2)
    np.testing.assert_allclose(loglik(model, data, chunk=chunk), loglik(model, data), atol=1e-10)


def test_density_peaks_at_center():
    rng = RngStream(4)
    center = rng.normal(3).reshape(1, 3)
    model = ParzenModel(centers=center, sigma=0.3)
    peak = -0.5 * 3 * np.log(2 * np.pi * 0.09)
    data = center + rng.normal(30).reshape(10, 3)
    assert np.all(loglik(model, data) <= peak + 1e-12)
    np.testing.assert_allclose(loglik(model, center), [peak], atol=1e-12)


def test_mean_loglik_se_hand_check():
    model = ParzenModel(centers=np.zeros((1, 1)), sigma=1.0)
    data = np.array([[0.0], [2.0]])
    mean, se = mean_loglik(model, data)
    ll = loglik(model, data)
    np.testing.assert_allclose(mean, ll.mean())
    np.testing.assert_allclose(se, np.std(ll, ddof=1) / np.sqrt(2))


def test_mean_loglik_single_row_has_zero_se():
    model = ParzenModel(centers=np.zeros((1, 1)), sigma=1.0)
    _, se = mean_loglik(model, np.array([[1.0]]))
    assert se == 0.0


def test_crossval_prefers_small_sigma_on_matching_data():
    centers = np.zeros((5, 2))
    held = np.zeros((4, 2))
    assert crossval_sigma(centers, held, grid=(0.05, 0.2, 1.0)) == 0.05


def test_crossval_prefers_wide_sigma_on_distant_data():
    centers = np.zeros((5, 2))
    held = np.full((4, 2), 3.0)
    assert crossval_sigma(centers, held, grid=(0.05, 0.2, 1.0)) == 1.0


def test_crossval_grid_order_irrelevant():
    rng = RngStream(11)
    centers = rng.normal(10).reshape(5, 2)
    held = rng.normal(8).reshape(4, 2)
    a = crossval_sigma(centers, held, grid=(1.0, 0.05, 0.3))
    b = crossval_sigma(centers, held, grid=(0.05, 0.3, 1.0))
    assert a == b


def test_default_grid_shape():
    assert len(DEFAULT_SIGMA_GRID) == 20
    assert DEFAULT_SIGMA_GRID[0] == pytest.approx(0.05)
    assert DEFAULT_SIGMA_GRID[-1] == pytest.approx(1.0)
    assert all(b > a for a, b in zip(DEFAULT_SIGMA_GRID, DEFAULT_SIGMA_GRID[1:]))


def test_validation_errors():
    with pytest.raises(DomainError):
        ParzenModel(centers=np.zeros((0, 2)), sigma=1.0)
    with pytest.raises(ParameterError):
        ParzenModel(centers=np.zeros((1, 2)), sigma=0.0)
    model = ParzenModel(centers=np.zeros((1, 2)), sigma=1.0)
    with pytest.raises(ShapeError):
        loglik(model, np.zeros((3, 4)))
    with pytest.raises(ParameterError):
        crossval_sigma(np.zeros((1, 2)), np.zeros((1, 2)), grid=())


def test_histogram_tv_identical_and_disjoint():
    a = np.array([[0.0], [1.0]])
    assert histogram_tv(a, a, [-0.5, 0.5, 1.5]) == 0.0
    b = np.array([[0.0], [0.0]])
    c = np.array([[1.0], [1.0]])
    assert histogram_tv(b, c, [-0.5, 0.5, 1.5]) == 1.0


def test_histogram_tv_hand_value():
    a = np.array([[0.0], [0.0], [1.0], [1.0]])
    b = np.array([[0.0], [1.0], [1.0], [1.0]])
    assert histogram_tv(a, b, [-0.5, 0.5, 1.5]) == pytest.approx(0.25)


def test_histogram_tv_takes_worst_dimension():
    a = np.column_stack([np.zeros(4), np.array([0.0, 0.0, 1.0, 1.0])])
    b = np.column_stack([np.zeros(4), np.ones(4)])
    assert histogram_tv(a, b, [-0.5, 0.5, 1.5]) == pytest.approx(0.5)


def test_histogram_tv_errors():
    a = np.zeros((2, 1))
    with pytest.raises(ShapeError):
        histogram_tv(a, np.zeros((2, 2)), [0, 1])
    with pytest.raises(DomainError):
        histogram_tv(a, np.zeros((0, 1)), [0, 1])


@given(seed=st.integers(min_value=0, max_value=10**6), chunk=st.integers(min_value=1, max_value=40))
@settings(max_examples=30, deadline=None)
def test_chunk_invariance_property(seed, chunk):
    rng = RngStream(seed)
    n = 3 + seed % 5
    model = ParzenModel(centers=rng.normal(2 * n).reshape(n, 2), sigma=0.4)
    data = rng.normal(14).reshape(7, 2)
    np.testing.assert_allclose(loglik(model, data, chunk=chunk), loglik(model, data), atol=1e-9)


@given(seed=st.integers(min_value=0, max_value=10**6))
@settings(max_examples=30, deadline=None)
def test_scores_are_finite_property(seed):
    rng = RngStream(seed)
    model = ParzenModel(centers=rng.normal(6).reshape(3, 2), sigma=0.05)
    data = 10.0 * rng.normal(10).reshape(5, 2)
    assert np.all(np.isfinite(loglik(model, data)))
