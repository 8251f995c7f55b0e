"""Factorized reconstruction distributions and per-step scaling factors.

A reconstruction head is either a vector of Bernoulli logits or a Gaussian
mean/log-scale pair.  A learned scaling factor alpha_k reshapes the head at
walkback step k: Bernoulli probabilities become sigmoid(alpha_k * logit)
(larger alpha, less entropy) and Gaussian variances become alpha_k * sigma^2
(larger alpha, more entropy).  Steps past the last configured factor reuse
the final one; generation-time sampling uses the step-0 factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .errors import DomainError, ParameterError, ShapeError
from .numkit import RngStream

__all__ = [
    "Bernoulli",
    "Gaussian",
    "ReconParams",
    "ScalingFactors",
    "ReconGrads",
    "SIGMA_FLOOR",
    "PROB_CLIP",
    "nll",
    "sample",
    "mean",
]

SIGMA_FLOOR = 1e-3
PROB_CLIP = 1e-7


@dataclass
class Bernoulli:
    """Independent Bernoulli coordinates parameterized by logits."""

    logits: np.ndarray

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)
        if self.logits.ndim != 1:
            raise ShapeError(f"logits must be a vector, got shape {self.logits.shape}")
        if not np.all(np.isfinite(self.logits)):
            raise ParameterError("logits must be finite")


@dataclass
class Gaussian:
    """Independent Gaussian coordinates with learned mean and log scale."""

    mu: np.ndarray
    log_sigma: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.log_sigma = np.asarray(self.log_sigma, dtype=np.float64)
        if self.mu.shape != self.log_sigma.shape or self.mu.ndim != 1:
            raise ShapeError(
                f"mu and log_sigma must be vectors of equal length, got {self.mu.shape} and {self.log_sigma.shape}"
            )
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.log_sigma))):
            raise ParameterError("Gaussian parameters must be finite")

    def sigma(self) -> np.ndarray:
        """Scale with the degeneracy floor applied."""
        return np.maximum(np.exp(self.log_sigma), SIGMA_FLOOR)


ReconParams = Union[Bernoulli, Gaussian]


@dataclass
class ScalingFactors:
    """Positive per-step factors stored on the log scale."""

    log_alpha: np.ndarray

    def __post_init__(self):
        self.log_alpha = np.asarray(self.log_alpha, dtype=np.float64)
        if self.log_alpha.ndim != 1 or self.log_alpha.shape[0] < 1:
            raise ShapeError(
                f"log_alpha must be a nonempty vector, got shape {self.log_alpha.shape}"
            )

    @property
    def depth(self) -> int:
        return self.log_alpha.shape[0]

    def step_index(self, step_k: int) -> int:
        """Effective factor index for a step; steps past the end reuse the last."""
        if step_k < 0:
            raise ParameterError(f"step index must be nonnegative, got {step_k}")
        return min(step_k, self.depth - 1)

    def alpha(self, step_k: int) -> float:
        return float(np.exp(self.log_alpha[self.step_index(step_k)]))


@dataclass
class ReconGrads:
    """Gradients of one nll evaluation, keyed by head parameter.

    ``d_log_alpha`` always has the full factor length, with only the
    evaluated step's entry populated, so accumulation is plain addition.
    """

    d_logits: Optional[np.ndarray] = None
    d_mu: Optional[np.ndarray] = None
    d_log_sigma: Optional[np.ndarray] = None
    d_log_alpha: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def head_grad(self) -> np.ndarray:
        """Gradient with respect to the affine head output (logits or mu)."""
        return self.d_logits if self.d_logits is not None else self.d_mu


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # Branch on sign so the exp argument is never positive (no overflow).
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _check_target(params: ReconParams, target: np.ndarray):
    if isinstance(params, Bernoulli):
        dim = params.logits.shape[0]
    else:
        dim = params.mu.shape[0]
    if target.shape != (dim,):
        raise ShapeError(f"target shape {target.shape} does not match head dimension {dim}")
    if isinstance(params, Bernoulli) and not np.all((target == 0.0) | (target == 1.0)):
        raise DomainError("Bernoulli nll requires a binary target")


def nll(
    params: ReconParams, step_k: int, alphas: ScalingFactors, target: np.ndarray
) -> tuple[float, ReconGrads]:
    """Negative log-likelihood of ``target`` under the step-scaled head.

    Returns the scalar loss and exact gradients for the head parameters and
    the step's log factor.  Probabilities are clipped before the log, and the
    gradients are those of the clipped loss, so both stay finite everywhere.
    """
    target = np.asarray(target, dtype=np.float64)
    _check_target(params, target)
    idx = alphas.step_index(step_k)
    alpha = float(np.exp(alphas.log_alpha[idx]))
    d_log_alpha = np.zeros(alphas.depth)

    if isinstance(params, Bernoulli):
        scaled = alpha * params.logits
        p_raw = _sigmoid(scaled)
        p = np.clip(p_raw, PROB_CLIP, 1.0 - PROB_CLIP)
        loss = float(-np.sum(target * np.log(p) + (1.0 - target) * np.log(1.0 - p)))
        interior = (p_raw > PROB_CLIP) & (p_raw < 1.0 - PROB_CLIP)
        d_scaled = np.where(interior, p_raw - target, 0.0)
        d_log_alpha[idx] = float(np.sum(d_scaled * params.logits) * alpha)
        return loss, ReconGrads(d_logits=d_scaled * alpha, d_log_alpha=d_log_alpha)

    sigma_raw = np.exp(params.log_sigma)
    sigma = np.maximum(sigma_raw, SIGMA_FLOOR)
    var = alpha * sigma**2
    diff = target - params.mu
    loss = float(np.sum(0.5 * np.log(2.0 * np.pi * var) + diff**2 / (2.0 * var)))
    d_mu = -diff / var
    unfloored = sigma_raw > SIGMA_FLOOR
    d_log_sigma = np.where(unfloored, 1.0 - diff**2 / var, 0.0)
    d_log_alpha[idx] = float(np.sum(0.5 - diff**2 / (2.0 * var)))
    return loss, ReconGrads(d_mu=d_mu, d_log_sigma=d_log_sigma, d_log_alpha=d_log_alpha)


def sample(
    params: ReconParams, step_k: int, alphas: ScalingFactors, rng: RngStream
) -> np.ndarray:
    """Draw each coordinate independently from the step-scaled head."""
    alpha = alphas.alpha(step_k)
    if isinstance(params, Bernoulli):
        p = _sigmoid(alpha * params.logits)
        return (rng.uniform(p.shape) < p).astype(np.float64)
    sigma = params.sigma()
    return params.mu + np.sqrt(alpha) * sigma * rng.normal(params.mu.shape)


def mean(params: ReconParams, step_k: int, alphas: ScalingFactors) -> np.ndarray:
    """Mean of the step-scaled head; scaling never moves a Gaussian mean."""
    if isinstance(params, Bernoulli):
        alpha = alphas.alpha(step_k)
        return _sigmoid(alpha * params.logits)
    return params.mu.copy()
