"""Training loops: plain denoising, walkback rollouts, unrolled multi-step
training of deep models, and SGD with momentum and learning-rate decay.

Walkback training replaces the one-shot corrupted input with inputs taken
from a short run of the current model's own chain away from the clean
example, so the model learns to walk back to the data from the places its
chain actually visits.  The rollout length is fixed or geometric per
example; by default every intermediate corrupted state becomes a training
pair.  For deep models with no walkback schedule the graph is unrolled for
two sampled reconstructions per hidden layer and the per-step losses are
summed; gradients flow through the hidden-state recurrence but not through
sampled visible values.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from . import recon
from .corruption import AdditiveGaussian, Corruptor, LocalUniform, corrupt
from .errors import DomainError, ParameterError, ShapeError, TrainingDiverged
from .kernels import tabular_rollout_counts
from .network import (
    ChainState,
    GsnModel,
    SampleTape,
    StepRecord,
    backward,
    decode_step,
    encode_step,
    zero_gradients,
)
from .numkit import RngStream, draw_geometric
from .oracle import FiniteSystem, bayes_posterior
from .network import GradientSet

__all__ = [
    "NoWalkback",
    "GeometricWalkback",
    "FixedWalkback",
    "WalkbackSchedule",
    "GEOMETRIC_K_MAX",
    "TrainConfig",
    "TrainState",
    "EpochReport",
    "TabularCorruptor",
    "TabularDenoiser",
    "fit_tabular_counting",
    "draw_walkback_k",
    "walkback_rollout",
    "tabular_rollout_pair_counts",
    "pair_step_weights",
    "tabular_walkback_refit",
    "sgd_update",
    "apply_gradients",
    "unroll_example",
    "train_epoch",
    "train",
    "write_metrics",
]

GEOMETRIC_K_MAX = 20
LOG_ALPHA_BOUND = 4.0


@dataclass(frozen=True)
class NoWalkback:
    """One corruption per example; deep models still unroll two sweeps per layer."""


@dataclass(frozen=True)
class GeometricWalkback:
    """Rollout length drawn per example from a geometric distribution on
    {1, 2, ...}, truncated at GEOMETRIC_K_MAX."""

    p: float

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ParameterError(f"geometric parameter must be in (0, 1], got {self.p}")


@dataclass(frozen=True)
class FixedWalkback:
    """Constant rollout length."""

    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError(f"fixed walkback length must be at least 1, got {self.k}")


WalkbackSchedule = Union[NoWalkback, GeometricWalkback, FixedWalkback]


@dataclass
class TrainConfig:
    epochs: int
    lr: float
    momentum: float = 0.0
    lr_decay: float = 1.0
    minibatch: int = 1
    walkback: WalkbackSchedule = field(default_factory=NoWalkback)
    collect_intermediate: bool = True
    h0_policy: str = "zero"
    # Per-step scaling factors are frozen at 1 unless asked for; when
    # learned, their gradient aggregates every visible coordinate, so the
    # natural step is the per-coordinate rate divided by the visible
    # dimension (alpha_lr None picks that, tracking lr decay), and the log
    # factors are kept inside +-LOG_ALPHA_BOUND because the log-scale
    # gradient vanishes with the factor itself, which would make a deep
    # early plunge unrecoverable.
    learn_alpha: bool = False
    alpha_lr: Optional[float] = None

    def __post_init__(self):
        if self.epochs < 0:
            raise ParameterError(f"epochs must be nonnegative, got {self.epochs}")
        if not self.lr > 0.0:
            raise ParameterError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ParameterError(f"momentum must be in [0, 1), got {self.momentum}")
        if not 0.0 < self.lr_decay <= 1.0:
            raise ParameterError(f"lr_decay must be in (0, 1], got {self.lr_decay}")
        if self.minibatch < 1:
            raise ParameterError(f"minibatch must be at least 1, got {self.minibatch}")
        if self.h0_policy not in ("zero", "persist"):
            raise ParameterError(f"h0_policy must be 'zero' or 'persist', got {self.h0_policy!r}")
        if self.alpha_lr is not None and not self.alpha_lr > 0.0:
            raise ParameterError(f"alpha_lr must be positive, got {self.alpha_lr}")


@dataclass
class TrainState:
    """Mutable cross-epoch training state."""

    lr: float
    velocity: GradientSet
    h0_table: dict = field(default_factory=dict)
    epoch: int = 0


@dataclass
class EpochReport:
    epoch: int
    mean_nll: float
    lr_used: float


@dataclass
class TabularCorruptor:
    """Corruption over a finite state space as an explicit column-stochastic
    matrix (corrupted given clean); states are integers."""

    matrix: np.ndarray

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=np.float64)
        self._cum = np.cumsum(self.matrix, axis=0)

    def corrupt_state(self, x: int, rng: RngStream) -> int:
        u = float(rng.uniform())
        i = int(np.searchsorted(self._cum[:, x], u, side="right"))
        return min(i, self.matrix.shape[0] - 1)


@dataclass
class TabularDenoiser:
    """Reconstruction conditional over a finite state space as an explicit
    column-stochastic matrix (clean given corrupted)."""

    p_matrix: np.ndarray

    def __post_init__(self):
        self.p_matrix = np.asarray(self.p_matrix, dtype=np.float64)
        self._cum = np.cumsum(self.p_matrix, axis=0)

    @property
    def n_states(self) -> int:
        return self.p_matrix.shape[0]

    def sample_state(self, x_tilde: int, rng: RngStream) -> int:
        u = float(rng.uniform())
        i = int(np.searchsorted(self._cum[:, x_tilde], u, side="right"))
        return min(i, self.n_states - 1)


def fit_tabular_counting(
    clean: np.ndarray, corrupted: np.ndarray, n_states: int
) -> TabularDenoiser:
    """Maximum-likelihood tabular reconstruction fit by counting pairs.

    Columns (corrupted states) never observed fall back to the uniform
    distribution over clean states.
    """
    clean = np.asarray(clean, dtype=np.int64)
    corrupted = np.asarray(corrupted, dtype=np.int64)
    if clean.shape != corrupted.shape:
        raise ShapeError("clean and corrupted state arrays must have equal length")
    counts = np.zeros((n_states, n_states))
    np.add.at(counts, (clean, corrupted), 1.0)
    return tabular_denoiser_from_counts(counts)


def tabular_denoiser_from_counts(counts: np.ndarray) -> TabularDenoiser:
    """Normalize a counts[clean, corrupted] matrix into a denoiser, with the
    uniform fallback for empty corrupted-state columns."""
    counts = np.asarray(counts, dtype=np.float64)
    n = counts.shape[0]
    col = counts.sum(axis=0)
    p = np.where(col[None, :] > 0, counts / np.where(col[None, :] > 0, col[None, :], 1.0), 1.0 / n)
    return TabularDenoiser(p_matrix=p)


def draw_walkback_k(schedule: WalkbackSchedule, rng: RngStream) -> int:
    """Rollout length for one example under the schedule (1 when none)."""
    if isinstance(schedule, NoWalkback):
        return 1
    if isinstance(schedule, FixedWalkback):
        return schedule.k
    return min(draw_geometric(schedule.p, rng), GEOMETRIC_K_MAX)


def _sample_reconstruction_neural(model, h, x_tilde, step_k, rng):
    new_h, _ = encode_step(model, ChainState(x=x_tilde, h=h), x_tilde, rng)
    params = decode_step(model, ChainState(x=x_tilde, h=new_h))
    return recon.sample(params, step_k, model.alphas, rng), new_h


def walkback_rollout(
    model,
    corruptor,
    x0,
    k: int,
    collect_intermediate: bool,
    rng: RngStream,
) -> list[tuple]:
    """Generate training pairs by running the current model's chain away
    from a clean example.

    Alternates corruption and model reconstruction for ``k`` corruption
    draws starting at ``x0``.  Returns (x0, corrupted_j) for every step when
    ``collect_intermediate``, else only the final pair.  At k=1 this is
    exactly one plain denoising pair.  Works on neural models (vector
    states) and tabular denoisers (integer states, with a TabularCorruptor).
    """
    if k < 1:
        raise ParameterError(f"rollout length must be at least 1, got {k}")
    pairs = []
    if isinstance(model, TabularDenoiser):
        x = int(x0)
        for j in range(k):
            x_tilde = corruptor.corrupt_state(x, rng)
            if collect_intermediate or j == k - 1:
                pairs.append((int(x0), x_tilde))
            if j < k - 1:
                x = model.sample_state(x_tilde, rng)
        return pairs
    x = np.asarray(x0, dtype=np.float64)
    h = model.zero_hidden()
    for j in range(k):
        x_tilde = corrupt(corruptor, x, rng)
        if collect_intermediate or j == k - 1:
            pairs.append((np.asarray(x0, dtype=np.float64), x_tilde))
        if j < k - 1:
            x, h = _sample_reconstruction_neural(model, h, x_tilde, j, rng)
    return pairs


def tabular_rollout_pair_counts(
    model: TabularDenoiser,
    corruptor: TabularCorruptor,
    x0s: np.ndarray,
    schedule: WalkbackSchedule,
    collect_intermediate: bool,
    rng: RngStream,
) -> np.ndarray:
    """Pair counts from many tabular rollouts, via the compiled kernel.

    Behaves like summing ``walkback_rollout`` counts over all starts, with
    rollout lengths drawn per start from the schedule.
    """
    x0s = np.asarray(x0s, dtype=np.int64)
    n = x0s.shape[0]
    if isinstance(schedule, GeometricWalkback):
        ks = np.minimum(rng.geometric(schedule.p, n), GEOMETRIC_K_MAX).astype(np.int64)
    else:
        ks = np.full(n, draw_walkback_k(schedule, rng), dtype=np.int64)
    uniforms = rng.uniform(int(np.sum(2 * ks - 1)))
    return tabular_rollout_counts(
        corruptor.matrix, model.p_matrix, x0s, ks, uniforms, collect_intermediate
    )


def pair_step_weights(
    schedule: WalkbackSchedule, collect_intermediate: bool, k_max: int = GEOMETRIC_K_MAX
) -> np.ndarray:
    """Expected relative frequency of a training pair at each rollout step.

    Step j contributes a pair when the rollout length exceeds j (always, if
    only final pairs are kept, the length must equal j+1).  Used by the
    exact tabular refit in place of Monte-Carlo rollouts.
    """
    if isinstance(schedule, NoWalkback):
        return np.array([1.0])
    if isinstance(schedule, FixedWalkback):
        k = schedule.k
        if collect_intermediate:
            return np.full(k, 1.0 / k)
        w = np.zeros(k)
        w[-1] = 1.0
        return w
    p = schedule.p
    j = np.arange(k_max)
    tail = (1.0 - p) ** j  # probability the rollout reaches step j
    if not collect_intermediate:
        # Probability the rollout ends exactly at step j, with the truncated
        # tail folded into the last step.
        w = p * tail
        w[-1] = tail[-1]
        return w / w.sum()
    return tail / tail.sum()


def tabular_walkback_refit(
    p_x: np.ndarray,
    c: np.ndarray,
    schedule: WalkbackSchedule,
    collect_intermediate: bool = True,
    max_iters: int = 200,
    tol: float = 1e-12,
) -> tuple[np.ndarray, int, float]:
    """Iterate exact expectation walkback refitting to a fixed point.

    Each iteration mixes the corruption kernels reachable by the current
    reconstruction at every rollout step, then refits the reconstruction to
    the exact posterior of that mixture.  Returns (reconstruction matrix,
    iterations used, last parameter change).
    """
    p_x = np.asarray(p_x, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    weights = pair_step_weights(schedule, collect_intermediate)
    p = bayes_posterior(FiniteSystem(p_x=p_x, c=c))
    delta = np.inf
    for it in range(1, max_iters + 1):
        c_step = c
        c_mix = weights[0] * c_step
        for w in weights[1:]:
            c_step = c @ (p @ c_step)
            c_mix = c_mix + w * c_step
        p_new = bayes_posterior(FiniteSystem(p_x=p_x, c=c_mix))
        delta = float(np.max(np.abs(p_new - p)))
        p = p_new
        if delta < tol:
            return p, it, delta
    return p, max_iters, delta


def sgd_update(
    param: np.ndarray, grad: np.ndarray, velocity: np.ndarray, lr: float, momentum: float
) -> tuple[np.ndarray, np.ndarray]:
    """Momentum SGD step: v <- momentum v - lr g; theta <- theta + v."""
    param = np.asarray(param, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    velocity = np.asarray(velocity, dtype=np.float64)
    if param.shape != grad.shape or param.shape != velocity.shape:
        raise ShapeError(
            f"sgd_update shapes differ: param {param.shape}, grad {grad.shape}, velocity {velocity.shape}"
        )
    new_velocity = momentum * velocity - lr * grad
    return param + new_velocity, new_velocity


def apply_gradients(
    model: GsnModel,
    grads: GradientSet,
    velocity: GradientSet,
    lr: float,
    momentum: float,
    alpha_lr: Optional[float] = None,
):
    """Apply one momentum SGD step to every model parameter, in place.

    ``alpha_lr`` is the separate rate for the scaling factors: None freezes
    them, and updates clamp the log factors to +-LOG_ALPHA_BOUND (see
    TrainConfig).
    """
    pairs = [
        (model.up_weights, grads.d_up_weights, velocity.d_up_weights),
        (model.hidden_biases, grads.d_hidden_biases, velocity.d_hidden_biases),
    ]
    for params, gs, vs in pairs:
        for i in range(len(params)):
            vs[i] *= momentum
            vs[i] -= lr * gs[i]
            params[i] += vs[i]
    velocity.d_visible_bias *= momentum
    velocity.d_visible_bias -= lr * grads.d_visible_bias
    model.visible_bias += velocity.d_visible_bias
    if alpha_lr is not None:
        velocity.d_log_alpha *= momentum
        velocity.d_log_alpha -= alpha_lr * grads.d_log_alpha
        model.alphas.log_alpha += velocity.d_log_alpha
        np.clip(
            model.alphas.log_alpha, -LOG_ALPHA_BOUND, LOG_ALPHA_BOUND, out=model.alphas.log_alpha
        )
    if model.log_sigma is not None:
        velocity.d_log_sigma *= momentum
        velocity.d_log_sigma -= lr * grads.d_log_sigma
        model.log_sigma += velocity.d_log_sigma


def unroll_example(
    model: GsnModel,
    corruptor: Corruptor,
    x0: np.ndarray,
    steps: int,
    collect_intermediate: bool,
    h0: list[np.ndarray],
    rng: RngStream,
) -> tuple[float, list[StepRecord], list[np.ndarray], list[np.ndarray]]:
    """Forward pass of one example's unrolled training graph.

    Runs ``steps`` corruption/sweep/decode rounds from the clean example,
    scoring every round's reconstruction against the clean example (or only
    the last round's, without intermediate collection) with the round's
    scaling factor, and feeding each round's sampled reconstruction into the
    next round's corruption.  Returns the summed loss, the records backward
    needs, the hidden state after the first sweep, and the final state.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    x_cur = x0
    h = h0
    first_h: Optional[list[np.ndarray]] = None
    records: list[StepRecord] = []
    total = 0.0
    for t in range(steps):
        x_tilde = corrupt(corruptor, x_cur, rng)
        h, trace = encode_step(model, ChainState(x=x_cur, h=h), x_tilde, rng)
        if first_h is None:
            first_h = [v.copy() for v in h]
        params = decode_step(model, ChainState(x=x_cur, h=h))
        if collect_intermediate or t == steps - 1:
            loss, rg = recon.nll(params, t, model.alphas, x0)
            total += loss
            records.append(
                StepRecord(
                    sweep=trace,
                    head_grad=rg.head_grad(),
                    d_log_sigma=rg.d_log_sigma,
                    d_log_alpha=rg.d_log_alpha,
                )
            )
        else:
            records.append(StepRecord(sweep=trace))
        if t < steps - 1:
            x_cur = recon.sample(params, t, model.alphas, rng)
            if isinstance(params, recon.Gaussian) and isinstance(
                corruptor, (AdditiveGaussian, LocalUniform)
            ):
                # Continuous sample fed through additive corruption: record
                # its reparametrization so backward can follow the path.
                records[-1].sample_tape = SampleTape(
                    residual=x_cur - params.mu,
                    unfloored=np.exp(model.log_sigma) > recon.SIGMA_FLOOR,
                    alpha_index=model.alphas.step_index(t),
                )
    return total, records, first_h, h


def _steps_for_example(model: GsnModel, config: TrainConfig, rng: RngStream) -> int:
    if isinstance(config.walkback, NoWalkback) and model.depth > 1:
        # Unroll two sampled reconstructions per hidden layer.
        return 2 * model.depth
    return draw_walkback_k(config.walkback, rng)


def fresh_state(model: GsnModel, config: TrainConfig) -> TrainState:
    return TrainState(lr=config.lr, velocity=zero_gradients(model))


def train_epoch(
    model: GsnModel,
    data: np.ndarray,
    config: TrainConfig,
    rng: RngStream,
    state: Optional[TrainState] = None,
    corruptor: Optional[Corruptor] = None,
) -> EpochReport:
    """One shuffled pass over the data with per-minibatch SGD updates.

    ``data`` is a matrix of examples (rows).  The learning rate decays
    multiplicatively at the end of the epoch.  A non-finite loss aborts with
    diagnostics naming the epoch, example index, and learning rate.
    """
    if corruptor is None:
        raise ParameterError("train_epoch needs a corruptor")
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 2 or data.shape[0] == 0:
        raise DomainError(f"data must be a nonempty matrix of examples, got shape {data.shape}")
    if data.shape[1] != model.n_visible:
        raise ShapeError(
            f"data dimension {data.shape[1]} does not match model visible size {model.n_visible}"
        )
    if state is None:
        state = fresh_state(model, config)
    lr_used = state.lr
    order = rng.permutation(data.shape[0])
    total_nll = 0.0
    batch_grads = None
    batch_count = 0
    for position, idx in enumerate(order):
        idx = int(idx)
        steps = _steps_for_example(model, config, rng)
        if config.h0_policy == "persist":
            h0 = state.h0_table.get(idx, model.zero_hidden())
        else:
            h0 = model.zero_hidden()
        loss, records, first_h, _ = unroll_example(
            model, corruptor, data[idx], steps, config.collect_intermediate, h0, rng
        )
        if not np.isfinite(loss):
            raise TrainingDiverged(
                "non-finite training loss",
                {"epoch": state.epoch, "example_index": idx, "lr": state.lr},
            )
        if config.h0_policy == "persist":
            state.h0_table[idx] = first_h
        total_nll += loss
        grads = backward(model, records)
        if batch_grads is None:
            batch_grads = grads
        else:
            _accumulate(batch_grads, grads)
        batch_count += 1
        if batch_count == config.minibatch or position == data.shape[0] - 1:
            _scale(batch_grads, 1.0 / batch_count)
            if not config.learn_alpha:
                alpha_lr = None
            elif config.alpha_lr is not None:
                alpha_lr = config.alpha_lr
            else:
                alpha_lr = state.lr / model.n_visible
            apply_gradients(
                model, batch_grads, state.velocity, state.lr, config.momentum, alpha_lr=alpha_lr
            )
            batch_grads = None
            batch_count = 0
    state.lr *= config.lr_decay
    report = EpochReport(epoch=state.epoch, mean_nll=total_nll / data.shape[0], lr_used=lr_used)
    state.epoch += 1
    return report


def _accumulate(into: GradientSet, other: GradientSet):
    for a, b in zip(into.d_up_weights, other.d_up_weights):
        a += b
    for a, b in zip(into.d_hidden_biases, other.d_hidden_biases):
        a += b
    into.d_visible_bias += other.d_visible_bias
    into.d_log_alpha += other.d_log_alpha
    if into.d_log_sigma is not None:
        into.d_log_sigma += other.d_log_sigma


def _scale(grads: GradientSet, factor: float):
    if factor == 1.0:
        return
    for a in grads.d_up_weights:
        a *= factor
    for a in grads.d_hidden_biases:
        a *= factor
    grads.d_visible_bias *= factor
    grads.d_log_alpha *= factor
    if grads.d_log_sigma is not None:
        grads.d_log_sigma *= factor


def train(
    model: GsnModel,
    data: np.ndarray,
    config: TrainConfig,
    rng: RngStream,
    corruptor: Optional[Corruptor] = None,
) -> list[EpochReport]:
    """Run the configured number of epochs and return per-epoch reports."""
    state = fresh_state(model, config)
    return [
        train_epoch(model, data, config, rng, state, corruptor=corruptor)
        for _ in range(config.epochs)
    ]


def write_metrics(path, reports: list[EpochReport], header_comment: Optional[str] = None):
    """Write per-epoch metrics as CSV: epoch, mean nll, learning rate.

    An optional comment line (for the run seed and config hash) goes first.
    Floats are written with repr so re-running a byte-identical training run
    yields a byte-identical file.
    """
    lines = []
    if header_comment:
        lines.append(f"# {header_comment}")
    lines.append("epoch,mean_nll,lr")
    for r in reports:
        lines.append(f"{r.epoch},{r.mean_nll!r},{r.lr_used!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
