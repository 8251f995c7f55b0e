"""Fixed corruption processes: ways of stochastically damaging an example.

Four kinds are provided: salt-and-pepper resampling of binary coordinates,
additive Gaussian noise, bounded uniform jitter, and masking of a random
coordinate subset.  ``corrupt`` draws a corrupted copy; ``density`` evaluates
the exact conditional pmf/density of a corrupted vector given the clean one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import DomainError, ParameterError, UnsupportedCorruptorError
from .numkit import RngStream

__all__ = [
    "SaltPepper",
    "AdditiveGaussian",
    "LocalUniform",
    "SubsetMask",
    "Corruptor",
    "corrupt",
    "density",
]


@dataclass(frozen=True)
class SaltPepper:
    """Each coordinate is selected with probability ``rate`` and, if selected,
    replaced by an independent fair coin flip (so a selected bit keeps its
    value half the time)."""

    rate: float

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ParameterError(f"salt-and-pepper rate must be in [0, 1], got {self.rate}")


@dataclass(frozen=True)
class AdditiveGaussian:
    """Adds independent N(0, sigma^2) noise to every coordinate."""

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0.0:
            raise ParameterError(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class LocalUniform:
    """Adds independent Uniform(-epsilon, epsilon) jitter to every coordinate.

    The support is bounded, so mass can only move to nearby values.
    """

    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0.0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")


@dataclass(frozen=True)
class SubsetMask:
    """Marks a uniformly chosen subset of coordinates as missing (NaN)."""

    subset_size: int

    def __post_init__(self):
        if self.subset_size < 1:
            raise ParameterError(f"subset_size must be at least 1, got {self.subset_size}")


Corruptor = Union[SaltPepper, AdditiveGaussian, LocalUniform, SubsetMask]


def _require_binary(x: np.ndarray):
    if not np.all((x == 0.0) | (x == 1.0)):
        raise DomainError("binary corruptor applied to a vector with entries outside {0, 1}")


def corrupt(c: Corruptor, x: np.ndarray, rng: RngStream):
    """Draw one corrupted copy of ``x``.

    ``x`` may be a vector or a batch of row vectors; corruption is applied
    independently per coordinate either way.  For SubsetMask the result is a
    pair (masked vector with NaN holes, sorted subset indices) and only
    single vectors are accepted, because the subset identity is per example.
    """
    x = np.asarray(x, dtype=np.float64)
    if isinstance(c, SaltPepper):
        _require_binary(x)
        selected = rng.uniform(x.shape) < c.rate
        coins = (rng.uniform(x.shape) < 0.5).astype(np.float64)
        return np.where(selected, coins, x)
    if isinstance(c, AdditiveGaussian):
        return x + c.sigma * rng.normal(x.shape)
    if isinstance(c, LocalUniform):
        return x + c.epsilon * (2.0 * rng.uniform(x.shape) - 1.0)
    if isinstance(c, SubsetMask):
        if x.ndim != 1:
            raise DomainError("SubsetMask corrupts one vector at a time")
        d = x.shape[0]
        if c.subset_size > d:
            raise ParameterError(
                f"subset_size {c.subset_size} exceeds dimension {d}"
            )
        subset = np.sort(rng.permutation(d)[: c.subset_size])
        masked = x.copy()
        masked[subset] = np.nan
        return masked, subset
    raise UnsupportedCorruptorError(f"unknown corruptor kind: {type(c).__name__}")


def density(c: Corruptor, x_tilde: np.ndarray, x: np.ndarray) -> float:
    """Exact conditional pmf/density of ``x_tilde`` given clean ``x``."""
    x_tilde = np.asarray(x_tilde, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_tilde.shape != x.shape or x.ndim != 1:
        raise DomainError(
            f"density expects two vectors of equal length, got {x_tilde.shape} and {x.shape}"
        )
    if isinstance(c, SaltPepper):
        _require_binary(x)
        if not np.all((x_tilde == 0.0) | (x_tilde == 1.0)):
            return 0.0
        # Kept untouched with prob 1-rate, or selected and re-flipped to the
        # same value with prob rate/2; a changed bit requires selection.
        same = x_tilde == x
        per_coord = np.where(same, 1.0 - c.rate + 0.5 * c.rate, 0.5 * c.rate)
        return float(np.prod(per_coord))
    if isinstance(c, AdditiveGaussian):
        diff = x_tilde - x
        d = x.shape[0]
        log_dens = -0.5 * float(diff @ diff) / c.sigma**2 - d * math.log(
            c.sigma * math.sqrt(2.0 * math.pi)
        )
        return math.exp(log_dens)
    if isinstance(c, LocalUniform):
        if np.max(np.abs(x_tilde - x)) > c.epsilon:
            return 0.0
        return (2.0 * c.epsilon) ** (-x.shape[0])
    if isinstance(c, SubsetMask):
        raise UnsupportedCorruptorError(
            "SubsetMask has no pointwise density; the chain samplers handle its missingness pattern directly"
        )
    raise UnsupportedCorruptorError(f"unknown corruptor kind: {type(c).__name__}")
