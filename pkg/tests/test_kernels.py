import numpy as np
import pytest

from gsn import kernels
from gsn.errors import ParameterError
from gsn.kernels import categorical_chain, random_scan_gibbs, tabular_rollout_counts
from gsn.numkit import RngStream


def reference_chain(transition, start, uniforms):
    # Independent reimplementation: walk the cdf of each column by hand.
    state = start
    out = []
    for u in uniforms:
        cdf = np.cumsum(transition[:, state])
        nxt = 0
        while nxt < len(cdf) - 1 and u >= cdf[nxt]:
            nxt += 1
        state = nxt
        out.append(state)
    return np.array(out, dtype=np.int64)


def reference_gibbs(prob_one, x0, scan_u, flip_u):
    d = prob_one.shape[0]
    x = x0.astype(np.int8).copy()
    out = np.empty((len(scan_u), d), dtype=np.int8)
    for t in range(len(scan_u)):
        s = min(int(scan_u[t] * d), d - 1)
        code = sum(int(x[j]) << j for j in range(d))
        x[s] = 1 if flip_u[t] < prob_one[s, code] else 0
        out[t] = x
    return out


def random_column_stochastic(rng, n):
    m = rng.uniform((n, n)) + 0.05
    return m / m.sum(axis=0, keepdims=True)


@pytest.mark.parametrize("seed", [0, 1, 2, 3])
def test_categorical_chain_matches_reference(seed):
    rng = RngStream(seed)
    n = 5
    t = random_column_stochastic(rng, n)
    uniforms = rng.uniform(400)
    got = categorical_chain(t, 2, uniforms)
    assert np.array_equal(got, reference_chain(t, 2, uniforms))


def test_categorical_chain_absorbing_state():
    t = np.array([[1.0, 1.0], [0.0, 0.0]])
    states = categorical_chain(t, 1, RngStream(4).uniform(50))
    assert np.all(states == 0)


def test_categorical_chain_emits_one_state_per_uniform():
    t = random_column_stochastic(RngStream(5), 3)
    assert categorical_chain(t, 0, RngStream(6).uniform(17)).shape == (17,)


def test_categorical_chain_rejects_bad_start():
    t = random_column_stochastic(RngStream(7), 3)
    with pytest.raises(ParameterError):
        categorical_chain(t, 3, np.array([0.5]))
    with pytest.raises(ParameterError):
        categorical_chain(t, -1, np.array([0.5]))


def test_categorical_chain_boundary_uniform_near_one():
    # u just below 1 must still land on a valid state.
    t = np.array([[0.5, 0.5], [0.5, 0.5]])
    states = categorical_chain(t, 0, np.array([1.0 - 1e-16, 0.0]))
    assert set(states.tolist()) <= {0, 1}


@pytest.mark.parametrize("seed", [0, 11])
def test_gibbs_matches_reference(seed):
    rng = RngStream(seed)
    d = 3
    prob_one = rng.uniform((d, 1 << d))
    x0 = (rng.uniform(d) < 0.5).astype(np.int8)
    scan_u = rng.uniform(300)
    flip_u = rng.uniform(300)
    got = random_scan_gibbs(prob_one, x0, scan_u, flip_u)
    assert np.array_equal(got, reference_gibbs(prob_one, x0, scan_u, flip_u))


def test_gibbs_records_post_update_state():
    # Deterministic conditionals: variable s always resamples to 1.
    prob_one = np.ones((2, 4))
    x0 = np.zeros(2, dtype=np.int8)
    out = random_scan_gibbs(prob_one, x0, np.array([0.0, 0.9]), np.array([0.5, 0.5]))
    assert np.array_equal(out, [[1, 0], [1, 1]])


def test_gibbs_validation_errors():
    prob_one = np.full((2, 4), 0.5)
    with pytest.raises(ParameterError):
        random_scan_gibbs(prob_one, np.zeros(3, dtype=np.int8), np.zeros(1), np.zeros(1))
    with pytest.raises(ParameterError):
        random_scan_gibbs(np.full((2, 3), 0.5), np.zeros(2, dtype=np.int8), np.zeros(1), np.zeros(1))
    with pytest.raises(ParameterError):
        random_scan_gibbs(prob_one, np.zeros(2, dtype=np.int8), np.zeros(2), np.zeros(3))


def reference_rollout_counts(corruption, reconstruction, x0s, ks, uniforms, collect):
    n = corruption.shape[0]
    counts = np.zeros((n, n))
    tick = 0

    def pick(u, column):
        cdf = np.cumsum(column)
        i = 0
        while i < n - 1 and u >= cdf[i]:
            i += 1
        return i

    for x0, k in zip(x0s, ks):
        x = int(x0)
        for j in range(int(k)):
            xt = pick(uniforms[tick], corruption[:, x])
            tick += 1
            if collect or j == k - 1:
                counts[x0, xt] += 1.0
            if j < k - 1:
                x = pick(uniforms[tick], reconstruction[:, xt])
                tick += 1
    return counts


@pytest.mark.parametrize("collect", [True, False])
def test_rollout_counts_match_reference(collect):
    rng = RngStream(20)
    n = 4
    c = random_column_stochastic(rng, n)
    p = random_column_stochastic(rng, n)
    x0s = rng.integers(0, n, size=60)
    ks = rng.geometric(0.5, size=60)
    uniforms = rng.uniform(int(np.sum(2 * ks - 1)))
    got = tabular_rollout_counts(c, p, x0s, ks, uniforms, collect)
    assert np.array_equal(got, reference_rollout_counts(c, p, x0s, ks, uniforms, collect))


def test_rollout_counts_totals():
    rng = RngStream(21)
    n = 3
    c = random_column_stochastic(rng, n)
    p = random_column_stochastic(rng, n)
    x0s = rng.integers(0, n, size=40)
    ks = rng.geometric(0.5, size=40)
    uniforms = rng.uniform(int(np.sum(2 * ks - 1)))
    collected = tabular_rollout_counts(c, p, x0s, ks, uniforms, True)
    last_only = tabular_rollout_counts(c, p, x0s, ks, uniforms, False)
    assert collected.sum() == float(ks.sum())
    assert last_only.sum() == float(len(ks))


def test_rollout_counts_validation():
    c = np.eye(2)
    with pytest.raises(ParameterError):
        tabular_rollout_counts(c, c, np.array([0]), np.array([0]), np.zeros(5))
    with pytest.raises(ParameterError):
        tabular_rollout_counts(c, c, np.array([0, 1]), np.array([1]), np.zeros(5))
    with pytest.raises(ParameterError):
        tabular_rollout_counts(c, c, np.array([0]), np.array([3]), np.zeros(2))


@pytest.mark.skipif(not kernels.HAS_NUMBA, reason="numba not installed")
def test_backends_are_bit_identical():
    rng = RngStream(30)
    n = 6
    t = random_column_stochastic(rng, n)
    uniforms = rng.uniform(2000)
    chain_fast = kernels._categorical_chain_numba(
        np.ascontiguousarray(np.cumsum(t, axis=0).T), 1, uniforms
    )
    chain_plain = kernels._categorical_chain_numpy(
        np.ascontiguousarray(np.cumsum(t, axis=0).T), 1, uniforms
    )
    assert np.array_equal(chain_fast, chain_plain)

    d = 4
    prob_one = rng.uniform((d, 1 << d))
    x0 = (rng.uniform(d) < 0.5).astype(np.int8)
    scan_u = rng.uniform(800)
    flip_u = rng.uniform(800)
    assert np.array_equal(
        kernels._random_scan_gibbs_numba(prob_one, x0, scan_u, flip_u),
        kernels._random_scan_gibbs_numpy(prob_one, x0, scan_u, flip_u),
    )

    c = random_column_stochastic(rng, n)
    p = random_column_stochastic(rng, n)
    x0s = rng.integers(0, n, size=50)
    ks = rng.geometric(0.5, size=50)
    uniforms = rng.uniform(int(np.sum(2 * ks - 1)))
    c_cum = np.ascontiguousarray(np.cumsum(c, axis=0).T)
    p_cum = np.ascontiguousarray(np.cumsum(p, axis=0).T)
    assert np.array_equal(
        kernels._tabular_rollout_counts_numba(c_cum, p_cum, x0s, ks, uniforms, True),
        kernels._tabular_rollout_counts_numpy(c_cum, p_cum, x0s, ks, uniforms, True),
    )
