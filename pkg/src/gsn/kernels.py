"""Sequential sampling kernels with two interchangeable backends.

The chain-stepping loops here are genuinely sequential (each state depends
on the previous one), so they are compiled with numba when it is available.
A pure-numpy implementation of identical arithmetic is kept as a fallback;
both consume pre-drawn uniform variates, so for the same inputs the two
backends produce bit-identical outputs.

Backend selection: set ``GSN_BACKEND=numba`` or ``GSN_BACKEND=numpy`` in the
environment; unset, numba is used when importable.  The matmul-heavy neural
paths elsewhere in the package stay in numpy, where BLAS already wins.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ParameterError

__all__ = [
    "BACKEND",
    "HAS_NUMBA",
    "categorical_chain",
    "random_scan_gibbs",
    "tabular_rollout_counts",
]

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        # Decorator stand-in so the kernel source below stays importable.
        if args and callable(args[0]):
            return args[0]

        def wrap(func):
            return func

        return wrap


_requested = os.environ.get("GSN_BACKEND", "").strip().lower()
if _requested == "numba":
    if not HAS_NUMBA:
        raise ImportError("GSN_BACKEND=numba requested but numba is not importable")
    BACKEND = "numba"
elif _requested == "numpy":
    BACKEND = "numpy"
elif _requested == "":
    BACKEND = "numba" if HAS_NUMBA else "numpy"
else:
    raise ParameterError(f"unknown GSN_BACKEND value: {_requested!r}")


def _pick(x: float, cum: np.ndarray) -> int:
    # Smallest index i with x < cum[i]; cum is a nondecreasing cdf over rows.
    n = cum.shape[0]
    i = int(np.searchsorted(cum, x, side="right"))
    return i if i < n else n - 1


def _categorical_chain_numpy(cum_t, start, uniforms):
    n_steps = uniforms.shape[0]
    out = np.empty(n_steps, dtype=np.int64)
    state = start
    for t in range(n_steps):
        state = _pick(uniforms[t], cum_t[state])
        out[t] = state
    return out


@njit(cache=True)
def _categorical_chain_numba(cum_t, start, uniforms):  # pragma: no cover - numba path
    n_steps = uniforms.shape[0]
    n = cum_t.shape[1]
    out = np.empty(n_steps, dtype=np.int64)
    state = start
    for t in range(n_steps):
        u = uniforms[t]
        i = 0
        while i < n - 1 and u >= cum_t[state, i]:
            i += 1
        state = i
        out[t] = state
    return out


def categorical_chain(transition: np.ndarray, start: int, uniforms: np.ndarray) -> np.ndarray:
    """Step a finite-state chain.

    ``transition`` is column-stochastic (transition[next, current]); one state
    is emitted per uniform variate, starting from ``start``.
    """
    transition = np.ascontiguousarray(transition, dtype=np.float64)
    uniforms = np.ascontiguousarray(uniforms, dtype=np.float64)
    n = transition.shape[0]
    if not 0 <= start < n:
        raise ParameterError(f"start state {start} outside 0..{n - 1}")
    # Row i of cum_t is the cdf of the next state given current state i.
    cum_t = np.ascontiguousarray(np.cumsum(transition, axis=0).T)
    if BACKEND == "numba":
        return _categorical_chain_numba(cum_t, start, uniforms)
    return _categorical_chain_numpy(cum_t, start, uniforms)


def _random_scan_gibbs_numpy(prob_one, x0, scan_u, flip_u):
    d, _ = prob_one.shape
    n_steps = scan_u.shape[0]
    x = x0.copy()
    code = 0
    for j in range(d):
        if x[j]:
            code += 1 << j
    out = np.empty((n_steps, d), dtype=np.int8)
    for t in range(n_steps):
        s = int(scan_u[t] * d)
        if s >= d:
            s = d - 1
        p1 = prob_one[s, code]
        new_bit = 1 if flip_u[t] < p1 else 0
        if new_bit != x[s]:
            code += (1 << s) if new_bit else -(1 << s)
            x[s] = new_bit
        out[t] = x
    return out


@njit(cache=True)
def _random_scan_gibbs_numba(prob_one, x0, scan_u, flip_u):  # pragma: no cover
    d = prob_one.shape[0]
    n_steps = scan_u.shape[0]
    x = x0.copy()
    code = 0
    for j in range(d):
        if x[j]:
            code += 1 << j
    out = np.empty((n_steps, d), dtype=np.int8)
    for t in range(n_steps):
        s = int(scan_u[t] * d)
        if s >= d:
            s = d - 1
        p1 = prob_one[s, code]
        new_bit = 1 if flip_u[t] < p1 else 0
        if new_bit != x[s]:
            if new_bit:
                code += 1 << s
            else:
                code -= 1 << s
            x[s] = new_bit
        for j in range(d):
            out[t, j] = x[j]
    return out


def random_scan_gibbs(
    prob_one: np.ndarray, x0: np.ndarray, scan_u: np.ndarray, flip_u: np.ndarray
) -> np.ndarray:
    """Random-scan Gibbs over binary variables.

    ``prob_one[s, code]`` is the probability that variable s is 1 given the
    others, indexed by the integer code of the full state (bit j of the code
    is variable j; the entry must not depend on bit s itself).  Each step
    picks one variable from its scan uniform and resamples it from its flip
    uniform; the post-update state is recorded.
    """
    prob_one = np.ascontiguousarray(prob_one, dtype=np.float64)
    x0 = np.ascontiguousarray(x0, dtype=np.int8)
    scan_u = np.ascontiguousarray(scan_u, dtype=np.float64)
    flip_u = np.ascontiguousarray(flip_u, dtype=np.float64)
    d = prob_one.shape[0]
    if x0.shape != (d,):
        raise ParameterError(f"x0 shape {x0.shape} does not match {d} variables")
    if prob_one.shape[1] != (1 << d):
        raise ParameterError(
            f"conditional table has {prob_one.shape[1]} columns, expected {1 << d}"
        )
    if scan_u.shape != flip_u.shape:
        raise ParameterError("scan and flip uniforms must have equal length")
    if BACKEND == "numba":
        return _random_scan_gibbs_numba(prob_one, x0, scan_u, flip_u)
    return _random_scan_gibbs_numpy(prob_one, x0, scan_u, flip_u)


def _tabular_rollout_counts_numpy(c_cum_t, p_cum_t, x0s, ks, uniforms, collect):
    n = c_cum_t.shape[0]
    counts = np.zeros((n, n), dtype=np.float64)
    tick = 0
    for i in range(x0s.shape[0]):
        x0 = x0s[i]
        k = ks[i]
        x = x0
        for j in range(k):
            xt = _pick(uniforms[tick], c_cum_t[x])
            tick += 1
            if collect or j == k - 1:
                counts[x0, xt] += 1.0
            if j < k - 1:
                x = _pick(uniforms[tick], p_cum_t[xt])
                tick += 1
    return counts


@njit(cache=True)
def _tabular_rollout_counts_numba(c_cum_t, p_cum_t, x0s, ks, uniforms, collect):  # pragma: no cover
    n = c_cum_t.shape[0]
    counts = np.zeros((n, n), dtype=np.float64)
    tick = 0
    for i in range(x0s.shape[0]):
        x0 = x0s[i]
        k = ks[i]
        x = x0
        for j in range(k):
            u = uniforms[tick]
            tick += 1
            xt = 0
            while xt < n - 1 and u >= c_cum_t[x, xt]:
                xt += 1
            if collect or j == k - 1:
                counts[x0, xt] += 1.0
            if j < k - 1:
                u = uniforms[tick]
                tick += 1
                xn = 0
                while xn < n - 1 and u >= p_cum_t[xt, xn]:
                    xn += 1
                x = xn
    return counts


def tabular_rollout_counts(
    corruption: np.ndarray,
    reconstruction: np.ndarray,
    x0s: np.ndarray,
    ks: np.ndarray,
    uniforms: np.ndarray,
    collect_intermediate: bool = True,
) -> np.ndarray:
    """Accumulate (clean, corrupted) pair counts from many alternating rollouts.

    Each rollout starts at a clean state, alternates corruption draws with
    reconstruction draws for k alternations, and counts the corrupted states
    against the rollout's clean state (every one, or only the last).  Both
    matrices are column-stochastic; ``uniforms`` must hold at least
    ``sum(2k - 1)`` variates.  Returns counts[clean, corrupted].
    """
    corruption = np.ascontiguousarray(corruption, dtype=np.float64)
    reconstruction = np.ascontiguousarray(reconstruction, dtype=np.float64)
    x0s = np.ascontiguousarray(x0s, dtype=np.int64)
    ks = np.ascontiguousarray(ks, dtype=np.int64)
    uniforms = np.ascontiguousarray(uniforms, dtype=np.float64)
    if x0s.shape != ks.shape:
        raise ParameterError("x0s and ks must have equal length")
    if np.any(ks < 1):
        raise ParameterError("every rollout length must be at least 1")
    needed = int(np.sum(2 * ks - 1))
    if uniforms.shape[0] < needed:
        raise ParameterError(f"need {needed} uniforms, got {uniforms.shape[0]}")
    c_cum_t = np.ascontiguousarray(np.cumsum(corruption, axis=0).T)
    p_cum_t = np.ascontiguousarray(np.cumsum(reconstruction, axis=0).T)
    if BACKEND == "numba":
        return _tabular_rollout_counts_numba(
            c_cum_t, p_cum_t, x0s, ks, uniforms, collect_intermediate
        )
    return _tabular_rollout_counts_numpy(
        c_cum_t, p_cum_t, x0s, ks, uniforms, collect_intermediate
    )
