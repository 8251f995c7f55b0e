"""The stochastic computational graph: a stack of noisy tanh layers with
tied up/down weights, updated in alternating odd/even sweeps, plus the
reconstruction head read off the first hidden layer.

Only upward weight matrices are stored; every downward map is the transpose
of the matching upward one, so the tying invariant holds structurally.  The
visible layer is layer 0; hidden layers are numbered from 1.  One
``encode_step`` updates the odd hidden layers (which read the corrupted
visible input and the even layers from the previous sweep) and then the even
hidden layers (which read the freshly updated odd layers).  ``backward``
walks recorded sweeps in reverse and accumulates exact gradients through the
hidden-state recurrence and the replayable noise, but never through sampled
visible values, which are treated as constants of the graph.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ParameterError, ShapeError
from .numkit import (
    NoiseTape,
    RngStream,
    affine,
    noisy_tanh_backward,
    noisy_tanh_forward,
    noisy_tanh_replay,
)
from .recon import Bernoulli, Gaussian, ReconParams, ScalingFactors

__all__ = [
    "GsnModel",
    "ChainState",
    "LayerUpdate",
    "SweepTrace",
    "SampleTape",
    "StepRecord",
    "GradientSet",
    "init_model",
    "encode_step",
    "decode_step",
    "backward",
    "zero_gradients",
    "parameter_arrays",
]


@dataclass
class GsnModel:
    """Layer stack with tied weights and a factorized reconstruction head."""

    layer_sizes: list[int]
    up_weights: list[np.ndarray]
    hidden_biases: list[np.ndarray]
    visible_bias: np.ndarray
    noise: list[tuple[float, float]]
    head: str
    alphas: ScalingFactors
    log_sigma: Optional[np.ndarray] = None

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ShapeError("a model needs a visible layer and at least one hidden layer")
        if self.head not in ("bernoulli", "gaussian"):
            raise ParameterError(f"unknown head kind: {self.head!r}")
        d = self.depth
        if len(self.up_weights) != d or len(self.hidden_biases) != d or len(self.noise) != d:
            raise ShapeError("per-layer field lengths do not match the number of hidden layers")
        for i, w in enumerate(self.up_weights):
            expected = (self.layer_sizes[i], self.layer_sizes[i + 1])
            if w.shape != expected:
                raise ShapeError(f"up weight {i + 1} has shape {w.shape}, expected {expected}")
        if self.head == "gaussian":
            if self.log_sigma is None or self.log_sigma.shape != (self.layer_sizes[0],):
                raise ShapeError("a gaussian head needs a per-coordinate log_sigma vector")
        elif self.log_sigma is not None:
            raise ShapeError("log_sigma is only meaningful for a gaussian head")

    @property
    def depth(self) -> int:
        """Number of hidden layers."""
        return len(self.layer_sizes) - 1

    @property
    def n_visible(self) -> int:
        return self.layer_sizes[0]

    def zero_hidden(self) -> list[np.ndarray]:
        """All-zero hidden state."""
        return [np.zeros(s) for s in self.layer_sizes[1:]]


@dataclass
class ChainState:
    """Visible vector plus one vector per hidden layer."""

    x: np.ndarray
    h: list[np.ndarray]


@dataclass
class LayerUpdate:
    """One hidden layer's update inside a sweep, with everything backward needs."""

    layer: int
    below: np.ndarray
    above: Optional[np.ndarray]
    tape: NoiseTape


@dataclass
class SweepTrace:
    """All layer updates of one sweep, in update order, plus the new state."""

    updates: list[LayerUpdate]
    new_h: list[np.ndarray]


@dataclass
class SampleTape:
    """Reparametrization record of one continuous visible sample.

    ``residual`` is the drawn sample minus the head mean, which equals the
    scaled noise; ``unfloored`` marks coordinates whose scale sits above its
    degeneracy floor (floored coordinates have zero scale gradient).
    """

    residual: np.ndarray
    unfloored: np.ndarray
    alpha_index: int


@dataclass
class StepRecord:
    """One unrolled chain step: its sweep and the loss gradients at its output.

    ``head_grad`` is the gradient of this step's loss with respect to the
    affine head output (logits or mean); None when the step carries no loss.
    The log-scale and factor gradients do not flow through the layer stack
    and are accumulated directly.  ``sample_tape`` is set when this step's
    continuous sample was fed onward through an additive corruption, keeping
    that path differentiable; discrete samples leave it None.
    """

    sweep: SweepTrace
    head_grad: Optional[np.ndarray] = None
    d_log_sigma: Optional[np.ndarray] = None
    d_log_alpha: Optional[np.ndarray] = None
    sample_tape: Optional[SampleTape] = None


@dataclass
class GradientSet:
    """Gradients for every model parameter, shaped like the model."""

    d_up_weights: list[np.ndarray]
    d_hidden_biases: list[np.ndarray]
    d_visible_bias: np.ndarray
    d_log_alpha: np.ndarray
    d_log_sigma: Optional[np.ndarray] = None


def zero_gradients(model: GsnModel) -> GradientSet:
    return GradientSet(
        d_up_weights=[np.zeros_like(w) for w in model.up_weights],
        d_hidden_biases=[np.zeros_like(b) for b in model.hidden_biases],
        d_visible_bias=np.zeros_like(model.visible_bias),
        d_log_alpha=np.zeros_like(model.alphas.log_alpha),
        d_log_sigma=None if model.log_sigma is None else np.zeros_like(model.log_sigma),
    )


def init_model(
    layer_sizes: list[int],
    head: str = "bernoulli",
    noise: Optional[list[tuple[float, float]]] = None,
    walkback_depth: int = 1,
    rng: Optional[RngStream] = None,
) -> GsnModel:
    """Build a model with tanh-appropriate uniform weight ranges.

    Weights are drawn uniformly in +-sqrt(6 / (fan_in + fan_out)); biases,
    log factors, and the gaussian log scale start at zero.  ``noise``
    defaults to noiseless hidden layers.
    """
    if rng is None:
        rng = RngStream(0)
    if walkback_depth < 1:
        raise ParameterError(f"walkback_depth must be at least 1, got {walkback_depth}")
    depth = len(layer_sizes) - 1
    if noise is None:
        noise = [(0.0, 0.0)] * depth
    if len(noise) != depth:
        raise ShapeError(f"noise has {len(noise)} entries for {depth} hidden layers")
    weights = []
    for fan_in, fan_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(limit * (2.0 * rng.uniform((fan_in, fan_out)) - 1.0))
    return GsnModel(
        layer_sizes=list(layer_sizes),
        up_weights=weights,
        hidden_biases=[np.zeros(s) for s in layer_sizes[1:]],
        visible_bias=np.zeros(layer_sizes[0]),
        noise=[(float(a), float(b)) for a, b in noise],
        head=head,
        alphas=ScalingFactors(np.zeros(walkback_depth)),
        log_sigma=np.zeros(layer_sizes[0]) if head == "gaussian" else None,
    )


def _check_state(model: GsnModel, h: list[np.ndarray]):
    if len(h) != model.depth:
        raise ShapeError(f"state has {len(h)} hidden layers, model has {model.depth}")
    for value, size in zip(h, model.layer_sizes[1:]):
        if value.shape != (size,):
            raise ShapeError(f"hidden layer shape {value.shape} does not match size {size}")


def encode_step(
    model: GsnModel,
    state: ChainState,
    x_corrupted: np.ndarray,
    rng: Optional[RngStream] = None,
    replay: Optional[SweepTrace] = None,
) -> tuple[list[np.ndarray], SweepTrace]:
    """One odd-then-even update sweep over the hidden layers.

    Layer 1's bottom input is the corrupted visible vector.  Every other
    pre-activation sums the upward affine map from the layer below and the
    transposed map from the layer above.  With ``replay`` set, the recorded
    noise of a previous sweep is reused instead of drawing fresh noise, so
    the sweep becomes a deterministic function of its inputs.
    """
    _check_state(model, state.h)
    x_row = np.asarray(x_corrupted, dtype=np.float64).reshape(1, -1)
    if x_row.shape[1] != model.n_visible:
        raise ShapeError(
            f"corrupted input has {x_row.shape[1]} coordinates, model expects {model.n_visible}"
        )
    if (rng is None) == (replay is None):
        raise ParameterError("exactly one of rng and replay must be provided")
    depth = model.depth
    current = [value[None, :] for value in state.h]
    updates: list[LayerUpdate] = []
    replay_iter = iter(replay.updates) if replay is not None else None
    order = [i for i in range(1, depth + 1) if i % 2 == 1] + [
        i for i in range(1, depth + 1) if i % 2 == 0
    ]
    for i in order:
        below = x_row if i == 1 else current[i - 2]
        pre = affine(below, model.up_weights[i - 1], model.hidden_biases[i - 1])
        above = current[i] if i < depth else None
        if above is not None:
            pre = pre + above @ model.up_weights[i].T
        if replay_iter is None:
            sigma_in, sigma_out = model.noise[i - 1]
            value, tape = noisy_tanh_forward(pre, sigma_in, sigma_out, rng)
        else:
            prior = next(replay_iter)
            if prior.layer != i:
                raise ShapeError("replay trace does not match the model's sweep structure")
            value, tape = noisy_tanh_replay(pre, prior.tape)
        current[i - 1] = value
        updates.append(
            LayerUpdate(layer=i, below=below.copy(), above=None if above is None else above.copy(), tape=tape)
        )
    new_h = [value[0].copy() for value in current]
    return new_h, SweepTrace(updates=updates, new_h=new_h)


def decode_step(model: GsnModel, state: ChainState) -> ReconParams:
    """Reconstruction head read off the first hidden layer.

    The affine head output is h1 through the transposed first weight matrix
    plus the visible bias: logits for a Bernoulli head, the mean for a
    Gaussian head (whose log scale is a model parameter).
    """
    _check_state(model, state.h)
    h1 = state.h[0][None, :]
    vis = (h1 @ model.up_weights[0].T + model.visible_bias)[0]
    if model.head == "bernoulli":
        return Bernoulli(logits=vis)
    return Gaussian(mu=vis, log_sigma=model.log_sigma.copy())


def backward(model: GsnModel, steps: list[StepRecord]) -> GradientSet:
    """Accumulate gradients through a sequence of recorded chain steps.

    Walks the steps from last to first.  At each step the head gradient
    feeds the tied first weight matrix, the visible bias, and the first
    hidden layer; the sweep is then unwound in reverse update order, sending
    each layer's gradient into its weights, its bias, and the neighbor
    values it read (the top-down read of a neighbor also charges that
    neighbor's tied weight matrix).  Gradients into values produced by the
    same sweep stay in the current accumulator; gradients into values read
    from the previous sweep are handed to the preceding step.  The gradient
    into a step's corrupted input flows onward into the previous step's
    continuous sample when its reparametrization tape is present; discrete
    sampled visibles break the path and absorb nothing.
    """
    grads = zero_gradients(model)
    depth = model.depth
    w1 = model.up_weights[0]
    # Gradients on hidden values produced by the sweep currently being unwound.
    carried: dict[int, np.ndarray] = {}
    # Gradient into the corrupted input of the step processed just before
    # (chronologically the next step), addressed to this step's sample.
    pending_gx: Optional[np.ndarray] = None
    for step in reversed(steps):
        if step.d_log_alpha is not None:
            grads.d_log_alpha += step.d_log_alpha
        if step.d_log_sigma is not None:
            if grads.d_log_sigma is None:
                raise ShapeError("log_sigma gradient supplied for a non-gaussian head")
            grads.d_log_sigma += step.d_log_sigma
        g_vis = None
        if step.head_grad is not None:
            g_vis = np.asarray(step.head_grad, dtype=np.float64).reshape(1, -1)
        if pending_gx is not None and step.sample_tape is not None:
            # The sample was mean plus scaled noise, so the incoming gradient
            # lands on the mean directly and on the scales via the residual.
            tape = step.sample_tape
            res = tape.residual[None, :]
            if grads.d_log_sigma is not None:
                grads.d_log_sigma += np.where(tape.unfloored, (pending_gx * res)[0], 0.0)
            grads.d_log_alpha[tape.alpha_index] += 0.5 * float(np.sum(pending_gx * res))
            g_vis = pending_gx if g_vis is None else g_vis + pending_gx
        pending_gx = None
        if g_vis is not None:
            h1 = step.sweep.new_h[0][None, :]
            grads.d_up_weights[0] += g_vis.T @ h1
            grads.d_visible_bias += g_vis[0]
            carried[1] = carried.get(1, 0.0) + g_vis @ w1
        handoff: dict[int, np.ndarray] = {}
        for upd in reversed(step.sweep.updates):
            i = upd.layer
            g_out = carried.pop(i, None)
            if g_out is None:
                continue
            g_pre = noisy_tanh_backward(upd.tape, g_out)
            grads.d_up_weights[i - 1] += upd.below.T @ g_pre
            grads.d_hidden_biases[i - 1] += g_pre[0]
            # Odd layers read values from the previous sweep; even layers
            # read values freshly written by this sweep.
            neighbor_sink = handoff if i % 2 == 1 else carried
            if i > 1:
                g_below = g_pre @ model.up_weights[i - 1].T
                neighbor_sink[i - 1] = neighbor_sink.get(i - 1, 0.0) + g_below
            else:
                g_input = g_pre @ w1.T
                pending_gx = g_input if pending_gx is None else pending_gx + g_input
            if upd.above is not None:
                g_above = g_pre @ model.up_weights[i]
                neighbor_sink[i + 1] = neighbor_sink.get(i + 1, 0.0) + g_above
                # The top-down term read this neighbor through its own tied
                # weights, which therefore also accumulate here.
                grads.d_up_weights[i] += g_pre.T @ upd.above
        # Whatever remains addressed to layers this sweep never rewrote
        # (none, in a full sweep) plus the handoff flows to the previous step.
        for layer, g in carried.items():
            handoff[layer] = handoff.get(layer, 0.0) + g
        carried = handoff
    # Gradients addressed to the initial hidden state fall off the graph.
    return grads


def parameter_arrays(model: GsnModel) -> list[tuple[str, np.ndarray]]:
    """Model parameters in a fixed documented order, for serialization."""
    arrays: list[tuple[str, np.ndarray]] = []
    for i, w in enumerate(model.up_weights):
        arrays.append((f"up_weights.{i}", w))
    for i, b in enumerate(model.hidden_biases):
        arrays.append((f"hidden_biases.{i}", b))
    arrays.append(("visible_bias", model.visible_bias))
    arrays.append(("log_alpha", model.alphas.log_alpha))
    if model.log_sigma is not None:
        arrays.append(("log_sigma", model.log_sigma))
    return arrays
