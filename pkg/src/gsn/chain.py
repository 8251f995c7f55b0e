"""Markov chain sampling from trained models: free generation, clamped
conditional generation, tabular chains, and dependency-network Gibbs chains.

The generative chain alternates corruption and model reconstruction; the
samples it visits after burn-in are draws from the model's stationary
distribution.  Clamped runs hold a subset of visible coordinates fixed at
given values by overwriting them after every reconstruction, which samples
the model's conditional over the free coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import recon
from .corruption import corrupt
from .errors import DomainError, ParameterError, ShapeError
from .kernels import categorical_chain, random_scan_gibbs
from .network import ChainState, GsnModel, decode_step, encode_step
from .numkit import RngStream
from .trainer import TabularCorruptor, TabularDenoiser

__all__ = [
    "Clamp",
    "ChainRun",
    "ChainResult",
    "run_chain",
    "run_clamped_chain",
    "run_tabular_clamped_chain",
    "run_depnet_chain",
    "depnet_tables_from_joint",
    "depnet_scan_matrix",
    "state_codes",
]


@dataclass(frozen=True)
class Clamp:
    """Visible coordinates to hold fixed, with their values."""

    indices: tuple
    values: tuple

    def __post_init__(self):
        if len(self.indices) != len(self.values):
            raise ParameterError(
                f"clamp has {len(self.indices)} indices but {len(self.values)} values"
            )
        if len(self.indices) == 0:
            raise ParameterError("clamp needs at least one coordinate")
        if len(set(self.indices)) != len(self.indices):
            raise ParameterError("clamp indices must be distinct")


@dataclass(frozen=True)
class ChainRun:
    """Length and bookkeeping of one sampling run."""

    n_samples: int
    burn_in: int = 1000
    thin: int = 1
    clamp: Optional[Clamp] = None
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 0:
            raise ParameterError(f"n_samples must be nonnegative, got {self.n_samples}")
        if self.burn_in < 0:
            raise ParameterError(f"burn_in must be nonnegative, got {self.burn_in}")
        if self.thin < 1:
            raise ParameterError(f"thin must be at least 1, got {self.thin}")

    @property
    def total_steps(self) -> int:
        return self.burn_in + self.n_samples * self.thin


@dataclass
class ChainResult:
    """Recorded chain output.

    ``samples`` holds sampled visible states, one row per recorded step (a
    vector of integers for tabular chains).  ``means`` holds the model's
    mean reconstruction at the same steps for neural models, None for
    tabular chains.
    """

    samples: np.ndarray
    means: Optional[np.ndarray]


def _initial_visible(model: GsnModel, rng: RngStream) -> np.ndarray:
    if model.head == "bernoulli":
        return (rng.uniform(model.n_visible) < 0.5).astype(np.float64)
    return rng.normal(model.n_visible)


def _record_slots(run: ChainRun):
    # Step index (0-based) -> record slot, or -1.
    def slot(step: int) -> int:
        past = step - run.burn_in
        if past < 0 or (past + 1) % run.thin != 0:
            return -1
        return (past + 1) // run.thin - 1

    return slot


def run_chain(model, corruptor, run: ChainRun) -> ChainResult:
    """Sample the alternating corruption/reconstruction chain.

    Neural models start from a random visible state (fair coin flips for a
    binary head, standard normal otherwise) and zero hidden state; each step
    corrupts the current visible state, runs one sweep, decodes, and samples
    the next visible state with the generation-time scaling factor.  Tabular
    denoisers run the composed finite-state kernel through the compiled
    chain kernel instead.
    """
    if run.clamp is not None:
        raise ParameterError("run_chain does not clamp; use run_clamped_chain")
    rng = RngStream(run.seed)
    if isinstance(model, TabularDenoiser):
        if not isinstance(corruptor, TabularCorruptor):
            raise ParameterError("tabular chains need a TabularCorruptor")
        kernel = model.p_matrix @ corruptor.matrix
        n = kernel.shape[0]
        start = int(rng.integers(0, n))
        if run.total_steps == 0:
            return ChainResult(samples=np.zeros(0, dtype=np.int64), means=None)
        states = categorical_chain(kernel, start, rng.uniform(run.total_steps))
        keep = states[run.burn_in :].reshape(-1, run.thin)[:, -1] if run.n_samples else states[:0]
        return ChainResult(samples=keep.copy(), means=None)
    x = _initial_visible(model, rng)
    h = model.zero_hidden()
    samples = np.zeros((run.n_samples, model.n_visible))
    means = np.zeros((run.n_samples, model.n_visible))
    slot = _record_slots(run)
    for step in range(run.total_steps):
        x_tilde = corrupt(corruptor, x, rng)
        h, _ = encode_step(model, ChainState(x=x, h=h), x_tilde, rng)
        params = decode_step(model, ChainState(x=x, h=h))
        x = recon.sample(params, 0, model.alphas, rng)
        s = slot(step)
        if s >= 0:
            samples[s] = x
            means[s] = recon.mean(params, 0, model.alphas)
    return ChainResult(samples=samples, means=means)


def run_clamped_chain(model: GsnModel, corruptor, run: ChainRun) -> ChainResult:
    """Sample the chain with some visible coordinates held fixed.

    The clamped coordinates start at their given values and are overwritten
    with them after every reconstruction sample, so the encoder always sees
    (a corrupted version of) the clamped values and the recorded free
    coordinates are draws from the model's conditional.
    """
    if run.clamp is None:
        raise ParameterError("run_clamped_chain needs a clamp")
    idx = np.asarray(run.clamp.indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= model.n_visible):
        raise DomainError(
            f"clamp indices must lie in [0, {model.n_visible}), got {run.clamp.indices}"
        )
    values = np.asarray(run.clamp.values, dtype=np.float64)
    rng = RngStream(run.seed)
    x = _initial_visible(model, rng)
    x[idx] = values
    h = model.zero_hidden()
    samples = np.zeros((run.n_samples, model.n_visible))
    means = np.zeros((run.n_samples, model.n_visible))
    slot = _record_slots(run)
    for step in range(run.total_steps):
        x_tilde = corrupt(corruptor, x, rng)
        h, _ = encode_step(model, ChainState(x=x, h=h), x_tilde, rng)
        params = decode_step(model, ChainState(x=x, h=h))
        x = recon.sample(params, 0, model.alphas, rng)
        x[idx] = values
        s = slot(step)
        if s >= 0:
            samples[s] = x
            means[s] = recon.mean(params, 0, model.alphas)
    return ChainResult(samples=samples, means=means)


def run_tabular_clamped_chain(
    f: np.ndarray, g: np.ndarray, subset, run: ChainRun
) -> np.ndarray:
    """Sample the clamped finite-state chain by honest two-stage alternation.

    Each step draws a latent state from the encoder column of the current
    visible state, then a next visible state from the decoder column
    restricted to the clamped subset and renormalized.  Returns the recorded
    visible states as indices into ``subset``.
    """
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    subset = np.asarray(sorted(set(int(s) for s in np.asarray(subset).ravel())), dtype=np.int64)
    if subset.size == 0:
        raise ParameterError("clamped subset must be nonempty")
    if subset[0] < 0 or subset[-1] >= g.shape[0]:
        raise DomainError(f"subset indices must lie in [0, {g.shape[0]})")
    g_sub = g[subset, :]
    col = g_sub.sum(axis=0)
    if np.any(col <= 0):
        bad = int(np.argmin(col))
        raise DomainError(
            f"decoder column {bad} has no mass on the clamped subset; the clamped chain cannot leave it"
        )
    g_cum = np.cumsum(g_sub / col[None, :], axis=0)
    f_cum = np.cumsum(f, axis=0)
    rng = RngStream(run.seed)
    pos = int(rng.integers(0, subset.size))
    out = np.zeros(run.n_samples, dtype=np.int64)
    slot = _record_slots(run)
    for step in range(run.total_steps):
        u_h = float(rng.uniform())
        h = min(int(np.searchsorted(f_cum[:, subset[pos]], u_h, side="right")), f.shape[0] - 1)
        u_x = float(rng.uniform())
        pos = min(int(np.searchsorted(g_cum[:, h], u_x, side="right")), subset.size - 1)
        s = slot(step)
        if s >= 0:
            out[s] = pos
    return out


def state_codes(x_bits: np.ndarray) -> np.ndarray:
    """Integer codes of binary state rows, bit j of the code = coordinate j."""
    x_bits = np.asarray(x_bits)
    if x_bits.ndim == 1:
        x_bits = x_bits[None, :]
    weights = (1 << np.arange(x_bits.shape[1])).astype(np.int64)
    return (x_bits.astype(np.int64) @ weights).astype(np.int64)


def depnet_tables_from_joint(p_joint: np.ndarray, d: int) -> np.ndarray:
    """Exact per-coordinate conditionals of a joint over d-bit states.

    ``p_joint`` is indexed by state code (bit j = coordinate j).  Returns
    the table prob_one[j, code]: the probability coordinate j is 1 given
    the other coordinates as in ``code`` (the j-th bit of the code does not
    affect the entry).
    """
    p_joint = np.asarray(p_joint, dtype=np.float64)
    n = 1 << d
    if p_joint.shape != (n,):
        raise ShapeError(f"joint must have {n} entries for {d} coordinates, got {p_joint.shape}")
    codes = np.arange(n)
    prob_one = np.zeros((d, n))
    for j in range(d):
        bit = 1 << j
        on = codes | bit
        off = codes & ~bit
        denom = p_joint[on] + p_joint[off]
        if np.any(denom <= 0):
            raise DomainError(
                f"joint gives zero mass to both settings of coordinate {j} for some context"
            )
        prob_one[j] = p_joint[on] / denom
    return prob_one


def depnet_scan_matrix(prob_one: np.ndarray) -> np.ndarray:
    """Exact column-stochastic kernel of the uniform random-scan update.

    Entry [next, current] averages, over the scanned coordinate, the
    probability of moving from the current state code to the next (which
    must differ in at most that coordinate).
    """
    prob_one = np.asarray(prob_one, dtype=np.float64)
    d, n = prob_one.shape
    if n != (1 << d):
        raise ShapeError(f"table must have 2^{d} columns, got {n}")
    k = np.zeros((n, n))
    for cur in range(n):
        for j in range(d):
            bit = 1 << j
            p1 = prob_one[j, cur]
            k[cur | bit, cur] += p1 / d
            k[cur & ~bit, cur] += (1.0 - p1) / d
    return k


def run_depnet_chain(prob_one: np.ndarray, run: ChainRun) -> np.ndarray:
    """Random-scan Gibbs sampling from per-coordinate conditional tables.

    Each step scans one uniformly chosen coordinate and resamples it from
    its table given the others.  The conditionals need not be consistent
    with any joint; the chain's stationary distribution defines one anyway.
    Returns recorded states as binary rows.
    """
    prob_one = np.asarray(prob_one, dtype=np.float64)
    d = prob_one.shape[0]
    if prob_one.shape != (d, 1 << d):
        raise ShapeError(f"table must be (d, 2^d), got {prob_one.shape}")
    rng = RngStream(run.seed)
    x0 = (rng.uniform(d) < 0.5).astype(np.int8)
    if run.total_steps == 0:
        return np.zeros((0, d), dtype=np.int8)
    scan_u = rng.uniform(run.total_steps)
    flip_u = rng.uniform(run.total_steps)
    states = random_scan_gibbs(prob_one, x0, scan_u, flip_u)
    if run.n_samples == 0:
        return np.zeros((0, d), dtype=np.int8)
    return states[run.burn_in :].reshape(-1, run.thin, d)[:, -1, :].copy()
