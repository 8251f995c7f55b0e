"""Generative stochastic networks: denoising models trained to invert a
corruption process, sampled as Markov chains whose stationary distribution
estimates the data, with exact finite-state oracles for every claim.

Submodules:
  numkit      deterministic counter-based RNG, dense ops, noisy tanh units
  kernels     compiled (or pure-numpy) hot loops for finite-state chains
  corruption  corruption processes C(corrupted | clean)
  recon       factorized reconstruction distributions and their losses
  network     layered model, alternating sweeps, unrolled backprop
  trainer     plain and walkback training, tabular fits, SGD
  chain       free, clamped, tabular, and random-scan sampling loops
  oracle      exact finite-state verification of the package's claims
  parzen      kernel-density log-likelihood evaluation
  cli         configs, datasets, artifacts, command dispatch
"""

from .corruption import AdditiveGaussian, LocalUniform, SaltPepper, SubsetMask, corrupt, density
from .errors import (
    ConfigError,
    DegenerateSupportError,
    DomainError,
    ErgodicityError,
    GsnError,
    IdxFormatError,
    IdxLengthError,
    IterationLimitError,
    NumericalError,
    ParameterError,
    RangeError,
    ShapeError,
    TrainingDiverged,
    UnsupportedCorruptorError,
)
from .network import GsnModel, init_model
from .numkit import RngStream
from .recon import ScalingFactors
from .trainer import (
    FixedWalkback,
    GeometricWalkback,
    NoWalkback,
    TabularCorruptor,
    TabularDenoiser,
    TrainConfig,
    train,
    train_epoch,
)
from .chain import ChainResult, ChainRun, Clamp, run_chain, run_clamped_chain, run_depnet_chain
from .parzen import ParzenModel, crossval_sigma, mean_loglik

__version__ = "0.1.0"

__all__ = [
    "AdditiveGaussian",
    "ChainResult",
    "ChainRun",
    "Clamp",
    "ConfigError",
    "DegenerateSupportError",
    "DomainError",
    "ErgodicityError",
    "FixedWalkback",
    "GeometricWalkback",
    "GsnError",
    "GsnModel",
    "IdxFormatError",
    "IdxLengthError",
    "IterationLimitError",
    "LocalUniform",
    "NoWalkback",
    "NumericalError",
    "ParameterError",
    "ParzenModel",
    "RangeError",
    "RngStream",
    "SaltPepper",
    "ScalingFactors",
    "ShapeError",
    "SubsetMask",
    "TabularCorruptor",
    "TabularDenoiser",
    "TrainConfig",
    "TrainingDiverged",
    "UnsupportedCorruptorError",
    "corrupt",
    "crossval_sigma",
    "density",
    "init_model",
    "mean_loglik",
    "run_chain",
    "run_clamped_chain",
    "run_depnet_chain",
    "train",
    "train_epoch",
]
