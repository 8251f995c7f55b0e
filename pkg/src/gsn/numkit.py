"""Dense 2-D float64 arrays, counter-based random streams, and the
differentiable primitives (affine maps and noisy tanh units) that the
network layers are assembled from.

A ``Tensor2`` is a C-contiguous 2-D float64 ``numpy.ndarray``; the helpers
here validate that convention instead of wrapping the array in a class, so
everything interoperates with numpy directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError

__all__ = [
    "Tensor2",
    "tensor2",
    "RngStream",
    "affine",
    "NoiseTape",
    "noisy_tanh_forward",
    "noisy_tanh_replay",
    "noisy_tanh_backward",
    "draw_geometric",
]

Tensor2 = np.ndarray

_SPLITMIX_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MASK64 = np.uint64(0xFFFFFFFFFFFFFFFF)


def tensor2(values, name: str = "array") -> Tensor2:
    """Coerce ``values`` to a C-contiguous 2-D float64 array.

    Raises ShapeError for non-2-D input and ParameterError for non-finite
    entries; every public operation in this package keeps both invariants.
    """
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be a 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} entries must be finite")
    return arr


def _splitmix64(value: np.uint64) -> np.uint64:
    # Bijective 64-bit mixer; distinct inputs give distinct outputs.
    with np.errstate(over="ignore"):
        z = (value + _SPLITMIX_GAMMA) & _MASK64
        z = ((z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)) & _MASK64
        z = ((z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)) & _MASK64
        return (z ^ (z >> np.uint64(31))) & _MASK64


class RngStream:
    """Counter-based random stream: (seed, counter) determines all future draws.

    Every draw keys a fresh Philox generator with (seed, counter) and then
    advances the counter, so a stream restored from those two integers
    continues bit-identically.  ``fork`` derives child streams whose seeds
    are distinct by construction (a bijective mix of consecutive inputs),
    making them pairwise independent Philox families.
    """

    __slots__ = ("seed", "counter")

    def __init__(self, seed: int, counter: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.counter = int(counter) & 0xFFFFFFFFFFFFFFFF

    def __repr__(self):
        return f"RngStream(seed={self.seed}, counter={self.counter})"

    def _next_generator(self) -> np.random.Generator:
        gen = np.random.Generator(
            np.random.Philox(key=np.array([self.seed, self.counter], dtype=np.uint64))
        )
        self.counter = (self.counter + 1) & 0xFFFFFFFFFFFFFFFF
        return gen

    def uniform(self, size=None) -> np.ndarray | float:
        """Draw uniforms on [0, 1)."""
        return self._next_generator().random(size)

    def normal(self, size=None) -> np.ndarray | float:
        """Draw standard normals."""
        return self._next_generator().standard_normal(size)

    def integers(self, low: int, high: int, size=None):
        """Draw integers from [low, high)."""
        return self._next_generator().integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        """Return a uniformly random permutation of range(n)."""
        return self._next_generator().permutation(n)

    def geometric(self, p: float, size=None):
        """Draw from the geometric distribution on {1, 2, ...}."""
        if not 0.0 < p <= 1.0:
            raise ParameterError(f"geometric parameter must be in (0, 1], got {p}")
        return self._next_generator().geometric(p, size=size)

    def fork(self, n: int) -> list["RngStream"]:
        """Derive ``n`` independent child streams, consuming one counter tick."""
        if n < 0:
            raise ParameterError(f"fork count must be nonnegative, got {n}")
        base = _splitmix64(np.uint64(self.seed) ^ _splitmix64(np.uint64(self.counter)))
        self.counter = (self.counter + 1) & 0xFFFFFFFFFFFFFFFF
        children = []
        for i in range(n):
            with np.errstate(over="ignore"):
                child_seed = _splitmix64((base + np.uint64(i)) & _MASK64)
            children.append(RngStream(int(child_seed)))
        return children

    def spawn(self) -> "RngStream":
        """Derive a single independent child stream."""
        return self.fork(1)[0]


def affine(input: Tensor2, weights: Tensor2, bias: np.ndarray) -> Tensor2:
    """Return ``input @ weights + bias`` with explicit shape validation."""
    input = np.asarray(input, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    bias = np.asarray(bias, dtype=np.float64)
    if input.ndim != 2 or weights.ndim != 2:
        raise ShapeError(
            f"affine expects 2-D operands, got input {input.shape} and weights {weights.shape}"
        )
    if input.shape[1] != weights.shape[0]:
        raise ShapeError(
            f"affine shape mismatch: input {input.shape} vs weights {weights.shape}"
        )
    if bias.ndim != 1 or bias.shape[0] != weights.shape[1]:
        raise ShapeError(
            f"affine bias length {bias.shape} does not match weights {weights.shape}"
        )
    return input @ weights + bias


@dataclass
class NoiseTape:
    """Recorded noise and activation of one noisy tanh application.

    Stores the sampled pre- and post-activation noise plus the tanh value,
    which is all the backward pass and exact replay need.
    """

    eta_in: np.ndarray
    eta_out: np.ndarray
    tanh_val: np.ndarray


def noisy_tanh_forward(
    a: Tensor2, sigma_in: float, sigma_out: float, rng: RngStream
) -> tuple[Tensor2, NoiseTape]:
    """Compute ``h = eta_out + tanh(eta_in + a)`` with fresh Gaussian noise.

    Both noise arrays are drawn even at sigma 0 so that random-stream
    consumption does not depend on the noise setting.
    """
    if sigma_in < 0 or sigma_out < 0:
        raise ParameterError(
            f"noise scales must be nonnegative, got sigma_in={sigma_in} sigma_out={sigma_out}"
        )
    a = np.asarray(a, dtype=np.float64)
    eta_in = rng.normal(a.shape) * sigma_in
    eta_out = rng.normal(a.shape) * sigma_out
    tanh_val = np.tanh(eta_in + a)
    return eta_out + tanh_val, NoiseTape(eta_in, eta_out, tanh_val)


def noisy_tanh_replay(a: Tensor2, tape: NoiseTape) -> tuple[Tensor2, NoiseTape]:
    """Re-run the forward pass with the tape's noise but a new pre-activation."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape != tape.eta_in.shape:
        raise ShapeError(
            f"replay shape mismatch: a {a.shape} vs tape {tape.eta_in.shape}"
        )
    tanh_val = np.tanh(tape.eta_in + a)
    return tape.eta_out + tanh_val, NoiseTape(tape.eta_in, tape.eta_out, tanh_val)


def noisy_tanh_backward(tape: NoiseTape, grad_h: Tensor2) -> Tensor2:
    """Gradient through the noisy tanh: ``grad_h * (1 - tanh^2)``.

    The additive output noise contributes nothing to the gradient in a.
    """
    grad_h = np.asarray(grad_h, dtype=np.float64)
    if grad_h.shape != tape.tanh_val.shape:
        raise ShapeError(
            f"grad shape {grad_h.shape} does not match tape shape {tape.tanh_val.shape}"
        )
    return grad_h * (1.0 - tape.tanh_val**2)


def draw_geometric(p: float, rng: RngStream) -> int:
    """Draw k from P(k=j) = p(1-p)^(j-1) on {1, 2, ...}."""
    if not 0.0 < p <= 1.0:
        raise ParameterError(f"geometric parameter must be in (0, 1], got {p}")
    return int(rng.geometric(p))
