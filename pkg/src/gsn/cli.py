"""Command-line surface: data ingestion, run configuration, command
dispatch, and artifact emission.

Subcommands: train, sample, inpaint, eval, verify, synth.  Configuration
is a flat JSON document; a handful of flags override individual fields.
Every emitted artifact embeds or is accompanied by the run seed and the
sha256 of the resolved configuration, and re-running a command with the
same config and seed reproduces every output byte for byte.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from . import chain as chain_mod
from . import oracle, parzen, trainer
from .corruption import AdditiveGaussian, LocalUniform, SaltPepper
from .errors import (
    ConfigError,
    DomainError,
    GsnError,
    IdxFormatError,
    IdxLengthError,
    ParameterError,
    RangeError,
    ShapeError,
)
from .network import GsnModel, init_model, parameter_arrays
from .numkit import RngStream
from .recon import ScalingFactors
from .trainer import FixedWalkback, GeometricWalkback, NoWalkback, TrainConfig

__all__ = [
    "RunConfig",
    "load_config",
    "config_sha256",
    "load_idx",
    "downsample_mean",
    "binarize",
    "synth_discrete",
    "synth_continuous",
    "synth_glyphs",
    "glyph_prototypes",
    "write_pgm",
    "read_pgm",
    "save_matrix",
    "load_matrix",
    "save_checkpoint",
    "load_checkpoint",
    "parse_walkback",
    "parse_corruptor",
    "parse_clamp",
    "verify_suite",
    "main",
]


# ---------------------------------------------------------------------------
# Configuration


@dataclass
class RunConfig:
    """Resolved flat run configuration.

    ``layer_sizes`` lists the visible layer first, then each hidden layer,
    so a one-hidden-layer denoiser over 196 pixels with 400 units is
    ``[196, 400]``.
    """

    dataset: str = "glyphs"
    idx_images: Optional[str] = None
    train_size: int = 10000
    test_size: int = 2000
    binarize_threshold: Optional[float] = None
    downsample: int = 1
    probabilities: Optional[list] = None
    glyph_flip: float = 0.05
    layer_sizes: Optional[list] = None
    head: str = "bernoulli"
    noise: Optional[list] = None
    hidden_noise_std: Optional[float] = None
    walkback: str = "none"
    collect_intermediate: bool = True
    h0_policy: str = "zero"
    epochs: int = 1
    lr: float = 0.25
    momentum: float = 0.5
    lr_decay: float = 0.99
    minibatch: int = 1
    learn_alpha: bool = False
    alpha_lr: Optional[float] = None
    corruptor: str = "salt_pepper:0.4"
    n_samples: int = 100
    burn_in: int = 1000
    thin: int = 1
    clamp: str = "right-half"
    inpaint_index: int = 0
    output_dir: str = "out"
    seed: int = 0
    checkpoint: Optional[str] = None
    image_width: Optional[int] = None
    image_height: Optional[int] = None
    eval_samples: Optional[str] = None
    eval_test: Optional[str] = None
    sigma: Optional[float] = None
    sigma_grid: Optional[list] = None

    def __post_init__(self):
        if self.layer_sizes is None:
            self.layer_sizes = [196, 400]
        if self.dataset not in ("glyphs", "discrete", "continuous", "idx"):
            raise ConfigError(f"unknown dataset kind: {self.dataset!r}")
        for path in (self.idx_images, self.eval_samples, self.eval_test):
            if path is not None and not os.path.exists(path):
                raise ConfigError(f"referenced path does not exist: {path}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def load_config(path: str, overrides: Optional[dict] = None) -> RunConfig:
    """Read a flat JSON config and apply flag overrides.

    Unknown keys and nested objects are rejected rather than ignored, so a
    typo never silently falls back to a default.
    """
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    for key, value in raw.items():
        if isinstance(value, dict):
            raise ConfigError(f"config must be flat; key {key!r} holds an object")
    merged = dict(raw)
    if overrides:
        merged.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**merged)


def config_sha256(config: RunConfig) -> str:
    """Hash of the resolved configuration, canonical JSON encoding."""
    payload = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def parse_walkback(spec: str):
    """Parse 'none', 'geom:P', or 'fixed:K' into a schedule."""
    if spec == "none":
        return NoWalkback()
    kind, sep, arg = spec.partition(":")
    if not sep:
        raise ConfigError(f"bad walkback spec: {spec!r} (want none, geom:P, or fixed:K)")
    try:
        if kind == "geom":
            return GeometricWalkback(p=float(arg))
        if kind == "fixed":
            return FixedWalkback(k=int(arg))
    except (ValueError, ParameterError) as exc:
        raise ConfigError(f"bad walkback spec {spec!r}: {exc}") from exc
    raise ConfigError(f"bad walkback spec: {spec!r} (want none, geom:P, or fixed:K)")


def parse_corruptor(spec: str):
    """Parse 'salt_pepper:RATE', 'gaussian:SIGMA', or 'local:EPSILON'."""
    kind, sep, arg = spec.partition(":")
    if not sep:
        raise ConfigError(f"bad corruptor spec: {spec!r}")
    try:
        if kind == "salt_pepper":
            return SaltPepper(rate=float(arg))
        if kind == "gaussian":
            return AdditiveGaussian(sigma=float(arg))
        if kind == "local":
            return LocalUniform(epsilon=float(arg))
    except (ValueError, ParameterError) as exc:
        raise ConfigError(f"bad corruptor spec {spec!r}: {exc}") from exc
    raise ConfigError(f"bad corruptor spec: {spec!r}")


def parse_clamp(spec: str, dim: int, width: Optional[int] = None) -> np.ndarray:
    """Clamp spec to sorted coordinate indices.

    'right-half' clamps the right half of each image row (needs the image
    width); otherwise the string is a comma-separated index list.
    """
    if spec == "right-half":
        if width is None:
            side = int(round(math.sqrt(dim)))
            if side * side != dim:
                raise ConfigError(
                    "right-half clamp needs image_width for non-square dimensions"
                )
            width = side
        idx = [i for i in range(dim) if (i % width) >= (width + 1) // 2]
        return np.asarray(idx, dtype=np.int64)
    try:
        idx = sorted(int(tok) for tok in spec.split(",") if tok.strip() != "")
    except ValueError as exc:
        raise ConfigError(f"bad clamp spec {spec!r}: {exc}") from exc
    if not idx:
        raise ConfigError("clamp spec names no coordinates")
    if len(set(idx)) != len(idx):
        raise ConfigError("clamp indices must be distinct")
    if idx[0] < 0 or idx[-1] >= dim:
        raise ConfigError(f"clamp indices must lie in [0, {dim})")
    return np.asarray(idx, dtype=np.int64)


def _model_noise(config: RunConfig) -> Optional[list]:
    if config.noise is not None:
        return [(float(a), float(b)) for a, b in config.noise]
    if config.hidden_noise_std is not None:
        depth = len(config.layer_sizes) - 1
        # Pre-activation noise on every hidden layer except the first.
        return [
            (0.0, 0.0) if i == 0 else (float(config.hidden_noise_std), 0.0)
            for i in range(depth)
        ]
    return None


def derived_seeds(seed: int) -> dict:
    """Named independent sub-seeds for each stage of a run."""
    names = ["train_data", "test_data", "init", "train", "chain", "parzen"]
    streams = RngStream(seed).fork(len(names))
    return {name: stream.seed for name, stream in zip(names, streams)}


# ---------------------------------------------------------------------------
# Data ingestion and synthesis

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


def load_idx(path: str) -> np.ndarray:
    """Parse an IDX file: images to a row-per-example matrix scaled to
    [0, 1], labels to an integer vector."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 4:
        raise IdxLengthError(f"{path}: too short for an IDX header")
    magic = int.from_bytes(data[:4], "big")
    if magic == IDX_IMAGES_MAGIC:
        ndim = 3
    elif magic == IDX_LABELS_MAGIC:
        ndim = 1
    else:
        raise IdxFormatError(f"{path}: bad IDX magic 0x{magic:08x}")
    header = 4 + 4 * ndim
    if len(data) < header:
        raise IdxLengthError(f"{path}: truncated dimension header")
    dims = [int.from_bytes(data[4 + 4 * i : 8 + 4 * i], "big") for i in range(ndim)]
    count = int(np.prod(dims)) if dims else 0
    if len(data) != header + count:
        raise IdxLengthError(
            f"{path}: payload has {len(data) - header} bytes, header promises {count}"
        )
    payload = np.frombuffer(data, dtype=np.uint8, offset=header)
    if magic == IDX_LABELS_MAGIC:
        return payload.astype(np.int64)
    n, rows, cols = dims
    return (payload.astype(np.float64) / 255.0).reshape(n, rows * cols)


def downsample_mean(images: np.ndarray, rows: int, cols: int, factor: int) -> np.ndarray:
    """Mean-pool flattened images by an integer factor per axis."""
    images = np.asarray(images, dtype=np.float64)
    if rows % factor or cols % factor:
        raise ShapeError(f"factor {factor} does not divide image shape {rows}x{cols}")
    n = images.shape[0]
    grid = images.reshape(n, rows // factor, factor, cols // factor, factor)
    return grid.mean(axis=(2, 4)).reshape(n, (rows // factor) * (cols // factor))


def binarize(images: np.ndarray, threshold: float) -> np.ndarray:
    """Threshold to exact {0.0, 1.0} values."""
    return (np.asarray(images, dtype=np.float64) > threshold).astype(np.float64)


def synth_discrete(spec, n: int, seed: int) -> np.ndarray:
    """n i.i.d. draws from a categorical distribution, as a state vector."""
    spec = np.asarray(spec, dtype=np.float64)
    if spec.ndim != 1 or spec.shape[0] == 0:
        raise ShapeError(f"probability vector must be 1-D and nonempty, got {spec.shape}")
    if np.any(spec < 0) or abs(spec.sum() - 1.0) > 1e-9:
        raise DomainError("probabilities must be nonnegative and sum to 1")
    rng = RngStream(seed)
    cum = np.cumsum(spec)
    states = np.searchsorted(cum, rng.uniform(n), side="right")
    return np.minimum(states, spec.shape[0] - 1).astype(np.int64)


_CONTINUOUS_PARAM_SEED = 868061


def _continuous_mixture_params():
    rng = RngStream(_CONTINUOUS_PARAM_SEED)
    weights = np.array([0.5, 0.3, 0.2])
    means = 2.0 * rng.normal((3, 10))
    chols = []
    for _ in range(3):
        m = rng.normal((10, 10))
        cov = m @ m.T / 10.0 + 0.2 * np.eye(10)
        chols.append(np.linalg.cholesky(cov))
    return weights, means, chols


def synth_continuous(n: int, seed: int) -> np.ndarray:
    """Draws from a fixed correlated 10-dimensional 3-component Gaussian
    mixture; the mixture itself never changes, only the draws follow the
    seed."""
    weights, means, chols = _continuous_mixture_params()
    rng = RngStream(seed)
    comps = np.searchsorted(np.cumsum(weights), rng.uniform(n), side="right")
    comps = np.minimum(comps, 2)
    noise = rng.normal((n, 10))
    out = np.zeros((n, 10))
    for k in range(3):
        mask = comps == k
        out[mask] = means[k] + noise[mask] @ chols[k].T
    return out


_SEGMENT_BOXES = {
    # (row range, col range), inclusive, on a 14x14 canvas.
    "A": ((1, 2), (2, 11)),
    "G": ((6, 7), (2, 11)),
    "D": ((11, 12), (2, 11)),
    "F": ((1, 7), (1, 2)),
    "B": ((1, 7), (11, 12)),
    "E": ((6, 12), (1, 2)),
    "C": ((6, 12), (11, 12)),
}

_DIGIT_SEGMENTS = [
    "ABCDEF",
    "BC",
    "ABDEG",
    "ABCDG",
    "BCFG",
    "ACDFG",
    "ACDEFG",
    "ABC",
    "ABCDEFG",
    "ABCDFG",
]

GLYPH_SIDE = 14


def glyph_prototypes() -> np.ndarray:
    """Ten clean segment-display digit images, one flattened row each."""
    protos = np.zeros((10, GLYPH_SIDE, GLYPH_SIDE))
    for digit, segments in enumerate(_DIGIT_SEGMENTS):
        for name in segments:
            (r0, r1), (c0, c1) = _SEGMENT_BOXES[name]
            protos[digit, r0 : r1 + 1, c0 : c1 + 1] = 1.0
    return protos.reshape(10, GLYPH_SIDE * GLYPH_SIDE)


def synth_glyphs(n: int, seed: int, flip: float = 0.05) -> np.ndarray:
    """Binary digit-glyph corpus: uniform class choice over the ten
    prototypes, then independent pixel flips with probability ``flip``.

    A deterministic stand-in for thresholded handwritten-digit images at
    the same dimensionality regime: ten well-separated modes on the
    hypercube with local noise around each.
    """
    if not 0.0 <= flip <= 0.5:
        raise ParameterError(f"flip probability must be in [0, 0.5], got {flip}")
    protos = glyph_prototypes()
    rng = RngStream(seed)
    classes = rng.integers(0, 10, n)
    base = protos[classes]
    flips = rng.uniform((n, protos.shape[1])) < flip
    return np.abs(base - flips.astype(np.float64))


def dataset_splits(config: RunConfig, seeds: dict) -> tuple[np.ndarray, np.ndarray]:
    """Train and test matrices for the configured dataset."""
    if config.dataset == "glyphs":
        train = synth_glyphs(config.train_size, seeds["train_data"], config.glyph_flip)
        test = synth_glyphs(config.test_size, seeds["test_data"], config.glyph_flip)
        return train, test
    if config.dataset == "continuous":
        return (
            synth_continuous(config.train_size, seeds["train_data"]),
            synth_continuous(config.test_size, seeds["test_data"]),
        )
    if config.dataset == "idx":
        if config.idx_images is None:
            raise ConfigError("dataset 'idx' needs idx_images")
        images = load_idx(config.idx_images)
        if config.downsample > 1:
            side = int(round(math.sqrt(images.shape[1])))
            images = downsample_mean(images, side, side, config.downsample)
        if config.binarize_threshold is not None:
            images = binarize(images, config.binarize_threshold)
        n_train = min(config.train_size, images.shape[0])
        train = images[:n_train]
        test = images[n_train : n_train + config.test_size]
        if test.shape[0] == 0:
            raise ConfigError("idx dataset too small for the requested test split")
        return train, test
    raise ConfigError(f"dataset {config.dataset!r} has no train/test split")


# ---------------------------------------------------------------------------
# Artifact emission


def _meta(config: RunConfig, extra: Optional[dict] = None) -> dict:
    meta = {"seed": config.seed, "config_sha256": config_sha256(config)}
    if extra:
        meta.update(extra)
    return meta


def save_matrix(path: str, matrix: np.ndarray, meta: dict):
    """Save an array as .npy with a sorted-key JSON sidecar carrying the run
    seed and config hash; both files are byte-deterministic."""
    np.save(path, np.ascontiguousarray(matrix))
    with open(str(path) + ".meta.json", "w") as fh:
        fh.write(json.dumps(meta, sort_keys=True, separators=(",", ": ")) + "\n")


def load_matrix(path: str) -> np.ndarray:
    return np.load(path)


CHECKPOINT_MAGIC = b"GSNCKPT1\n"


def save_checkpoint(path: str, model: GsnModel, meta: dict):
    """Write the versioned model dump: magic line, one sorted-key JSON
    header line, then raw little-endian float64 blobs in the documented
    parameter order."""
    arrays = parameter_arrays(model)
    header = {
        "layer_sizes": [int(s) for s in model.layer_sizes],
        "head": model.head,
        "noise": [[float(a), float(b)] for a, b in model.noise],
        "arrays": [[name, list(arr.shape)] for name, arr in arrays],
        "meta": meta,
    }
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode() + b"\n")
        for _, arr in arrays:
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str) -> tuple[GsnModel, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ConfigError(f"{path} is not a checkpoint (bad magic {magic!r})")
        header = json.loads(fh.readline().decode())
        blobs = {}
        for name, shape in header["arrays"]:
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise ConfigError(f"{path}: truncated blob for {name}")
            blobs[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    sizes = header["layer_sizes"]
    depth = len(sizes) - 1
    model = GsnModel(
        layer_sizes=sizes,
        up_weights=[blobs[f"up_weights.{i}"] for i in range(depth)],
        hidden_biases=[blobs[f"hidden_biases.{i}"] for i in range(depth)],
        visible_bias=blobs["visible_bias"],
        noise=[(float(a), float(b)) for a, b in header["noise"]],
        head=header["head"],
        alphas=ScalingFactors(blobs["log_alpha"]),
        log_sigma=blobs.get("log_sigma"),
    )
    return model, header.get("meta", {})


def write_pgm(
    samples: np.ndarray,
    width: int,
    height: int,
    path: str,
    tiles_per_row: Optional[int] = None,
):
    """Emit a binary PGM (P5, maxval 255) tiling sample rows left to right,
    wrapping into rows of tiles; missing tiles in the last row stay black.

    Bytes are floor(value*255 + 0.5), so 0.5 maps to 128.  Values outside
    [0, 1] are a range error, not silently clipped.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[None, :]
    n = samples.shape[0]
    if n == 0:
        raise DomainError("no samples to render")
    if samples.shape[1] != width * height:
        raise ShapeError(
            f"rows have {samples.shape[1]} entries, expected width*height = {width * height}"
        )
    lo, hi = samples.min(), samples.max()
    if lo < 0.0 or hi > 1.0:
        raise RangeError(f"pixel values must lie in [0, 1], got range [{lo}, {hi}]")
    if tiles_per_row is None:
        tiles_per_row = min(n, 16)
    rows_of_tiles = (n + tiles_per_row - 1) // tiles_per_row
    canvas = np.zeros((rows_of_tiles * height, tiles_per_row * width), dtype=np.uint8)
    quantized = np.floor(samples * 255.0 + 0.5).astype(np.uint8)
    for i in range(n):
        r, c = divmod(i, tiles_per_row)
        canvas[r * height : (r + 1) * height, c * width : (c + 1) * width] = quantized[
            i
        ].reshape(height, width)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{canvas.shape[1]} {canvas.shape[0]}\n255\n".encode())
        fh.write(canvas.tobytes())


def read_pgm(path: str) -> np.ndarray:
    """Parse a binary PGM written by write_pgm back to floats in [0, 1]."""
    with open(path, "rb") as fh:
        data = fh.read()
    parts = data.split(b"\n", 3)
    if len(parts) < 4 or parts[0] != b"P5":
        raise RangeError(f"{path} is not a binary PGM")
    w, h = (int(tok) for tok in parts[1].split())
    if parts[2] != b"255":
        raise RangeError(f"{path}: unsupported maxval {parts[2]!r}")
    pixels = np.frombuffer(parts[3][: w * h], dtype=np.uint8)
    if pixels.shape[0] != w * h:
        raise RangeError(f"{path}: truncated pixel payload")
    return (pixels.astype(np.float64) / 255.0).reshape(h, w)


def _image_shape(config: RunConfig, dim: int) -> Optional[tuple[int, int]]:
    if config.image_width and config.image_height:
        if config.image_width * config.image_height != dim:
            raise ConfigError(
                f"image_width*image_height = {config.image_width * config.image_height}"
                f" does not match dimension {dim}"
            )
        return config.image_width, config.image_height
    side = int(round(math.sqrt(dim)))
    if side * side == dim:
        return side, side
    return None


# ---------------------------------------------------------------------------
# Subcommands


def _build_model(config: RunConfig, seeds: dict) -> GsnModel:
    schedule = parse_walkback(config.walkback)
    if isinstance(schedule, FixedWalkback):
        walkback_depth = schedule.k
    elif isinstance(schedule, GeometricWalkback):
        walkback_depth = trainer.GEOMETRIC_K_MAX
    else:
        depth = len(config.layer_sizes) - 1
        walkback_depth = 2 * depth if depth > 1 else 1
    return init_model(
        config.layer_sizes,
        head=config.head,
        noise=_model_noise(config),
        walkback_depth=walkback_depth,
        rng=RngStream(seeds["init"]),
    )


def _train_config(config: RunConfig) -> TrainConfig:
    return TrainConfig(
        epochs=config.epochs,
        lr=config.lr,
        momentum=config.momentum,
        lr_decay=config.lr_decay,
        minibatch=config.minibatch,
        walkback=parse_walkback(config.walkback),
        collect_intermediate=config.collect_intermediate,
        h0_policy=config.h0_policy,
        learn_alpha=config.learn_alpha,
        alpha_lr=config.alpha_lr,
    )


def _checkpoint_path(config: RunConfig) -> str:
    if config.checkpoint is not None:
        return config.checkpoint
    return os.path.join(config.output_dir, "model.ckpt")


def cmd_train(config: RunConfig) -> int:
    seeds = derived_seeds(config.seed)
    train_data, _ = dataset_splits(config, seeds)
    if config.dataset == "discrete":
        raise ConfigError("neural training needs vector data; use synth/verify for discrete runs")
    model = _build_model(config, seeds)
    if train_data.shape[1] != model.n_visible:
        raise ConfigError(
            f"layer_sizes visible layer {model.n_visible} does not match data dimension"
            f" {train_data.shape[1]}"
        )
    corruptor = parse_corruptor(config.corruptor)
    reports = trainer.train(
        model, train_data, _train_config(config), RngStream(seeds["train"]), corruptor=corruptor
    )
    os.makedirs(config.output_dir, exist_ok=True)
    comment = f"seed={config.seed} config_sha256={config_sha256(config)}"
    trainer.write_metrics(os.path.join(config.output_dir, "metrics.csv"), reports, comment)
    save_checkpoint(_checkpoint_path(config), model, _meta(config))
    if reports:
        print(f"trained {config.epochs} epochs, final mean nll {reports[-1].mean_nll:.6f}")
    print(f"checkpoint: {_checkpoint_path(config)}")
    return 0


def _run_and_write_chain(config: RunConfig, clamp: Optional[chain_mod.Clamp], stem: str) -> int:
    path = _checkpoint_path(config)
    if not os.path.exists(path):
        raise ConfigError(f"checkpoint not found: {path} (run train first)")
    model, _ = load_checkpoint(path)
    corruptor = parse_corruptor(config.corruptor)
    seeds = derived_seeds(config.seed)
    run = chain_mod.ChainRun(
        n_samples=config.n_samples,
        burn_in=config.burn_in,
        thin=config.thin,
        clamp=clamp,
        seed=seeds["chain"],
    )
    if clamp is None:
        result = chain_mod.run_chain(model, corruptor, run)
    else:
        result = chain_mod.run_clamped_chain(model, corruptor, run)
    os.makedirs(config.output_dir, exist_ok=True)
    sample_path = os.path.join(config.output_dir, f"{stem}.npy")
    save_matrix(sample_path, result.samples, _meta(config, {"kind": stem}))
    if result.means is not None:
        save_matrix(
            os.path.join(config.output_dir, f"{stem}_means.npy"),
            result.means,
            _meta(config, {"kind": f"{stem}_means"}),
        )
    shape = _image_shape(config, model.n_visible)
    if shape is not None and model.head == "bernoulli" and result.samples.shape[0]:
        w, h = shape
        write_pgm(result.samples, w, h, os.path.join(config.output_dir, f"{stem}.pgm"))
    print(f"samples: {sample_path} ({result.samples.shape[0]} rows)")
    return 0


def cmd_sample(config: RunConfig) -> int:
    return _run_and_write_chain(config, None, "samples")


def cmd_inpaint(config: RunConfig) -> int:
    seeds = derived_seeds(config.seed)
    _, test_data = dataset_splits(config, seeds)
    if not 0 <= config.inpaint_index < test_data.shape[0]:
        raise ConfigError(
            f"inpaint_index {config.inpaint_index} outside the test split of"
            f" {test_data.shape[0]} examples"
        )
    example = test_data[config.inpaint_index]
    shape = _image_shape(config, example.shape[0])
    idx = parse_clamp(config.clamp, example.shape[0], shape[0] if shape else None)
    clamp = chain_mod.Clamp(
        indices=tuple(int(i) for i in idx), values=tuple(float(v) for v in example[idx])
    )
    os.makedirs(config.output_dir, exist_ok=True)
    save_matrix(
        os.path.join(config.output_dir, "inpaint_source.npy"),
        example[None, :],
        _meta(config, {"kind": "inpaint_source", "index": config.inpaint_index}),
    )
    return _run_and_write_chain(config, clamp, "inpaint")


def cmd_eval(config: RunConfig) -> int:
    seeds = derived_seeds(config.seed)
    samples_path = config.eval_samples or os.path.join(config.output_dir, "samples.npy")
    if not os.path.exists(samples_path):
        raise ConfigError(f"sample matrix not found: {samples_path}")
    centers = np.asarray(load_matrix(samples_path), dtype=np.float64)
    if config.eval_test is not None:
        test = np.asarray(load_matrix(config.eval_test), dtype=np.float64)
    else:
        _, test = dataset_splits(config, seeds)
    half = test.shape[0] // 2
    grid = config.sigma_grid or parzen.DEFAULT_SIGMA_GRID
    if config.sigma is not None:
        sigma = float(config.sigma)
        score_set = test
    else:
        if half == 0:
            raise ConfigError("test set too small to cross-validate a bandwidth")
        sigma = parzen.crossval_sigma(centers, test[:half], grid)
        score_set = test[half:]
    mean_ll, std_err = parzen.mean_loglik(parzen.ParzenModel(centers=centers, sigma=sigma), score_set)
    print(f"mean_ll={mean_ll:.4f} std_err={std_err:.4f} sigma={sigma} n_centers={centers.shape[0]}")
    os.makedirs(config.output_dir, exist_ok=True)
    with open(os.path.join(config.output_dir, "eval.json"), "w") as fh:
        fh.write(
            json.dumps(
                _meta(
                    config,
                    {
                        "mean_ll": mean_ll,
                        "std_err": std_err,
                        "sigma": sigma,
                        "n_centers": int(centers.shape[0]),
                        "n_scored": int(score_set.shape[0]),
                    },
                ),
                sort_keys=True,
                separators=(",", ": "),
            )
            + "\n"
        )
    return 0


def cmd_synth(config: RunConfig) -> int:
    seeds = derived_seeds(config.seed)
    os.makedirs(config.output_dir, exist_ok=True)
    out = os.path.join(config.output_dir, "synth.npy")
    if config.dataset == "discrete":
        if config.probabilities is None:
            raise ConfigError("dataset 'discrete' needs probabilities")
        data = synth_discrete(config.probabilities, config.train_size, seeds["train_data"])
    elif config.dataset == "continuous":
        data = synth_continuous(config.train_size, seeds["train_data"])
    elif config.dataset == "glyphs":
        data = synth_glyphs(config.train_size, seeds["train_data"], config.glyph_flip)
        strip = data[: min(100, data.shape[0])]
        write_pgm(strip, GLYPH_SIDE, GLYPH_SIDE, os.path.join(config.output_dir, "synth.pgm"))
    else:
        raise ConfigError("synth generates synthetic datasets; use dataset glyphs/discrete/continuous")
    save_matrix(out, data, _meta(config, {"kind": "synth", "dataset": config.dataset}))
    print(f"wrote {out} ({data.shape[0]} examples)")
    return 0


# ---------------------------------------------------------------------------
# Verification suite


def _verify_bayes_stationary(rng: RngStream):
    worst = 0.0
    for _ in range(25):
        n_x = int(rng.integers(2, 11))
        sys_ = oracle.random_finite_system(rng, n_x)
        post = oracle.bayes_posterior(sys_)
        pi = oracle.stationary(oracle.dae_transition(sys_, post))
        worst = max(worst, oracle.total_variation(pi, sys_.p_x))
    return worst < 1e-10, f"worst TV {worst:.2e}"


def _verify_walkback_fixed_point(rng: RngStream):
    p_x = np.array([0.5, 0.3, 0.2])
    c = oracle.random_transition(rng, 3)
    p, iters, delta = trainer.tabular_walkback_refit(
        p_x, c, GeometricWalkback(0.5), collect_intermediate=True
    )
    pi = oracle.stationary(p @ c)
    tv = oracle.total_variation(pi, p_x)
    ok = delta < 1e-6 and tv < 1e-3
    return ok, f"change {delta:.2e} after {iters} iters, chain TV {tv:.2e}"


def _verify_perturbation_bound(rng: RngStream):
    violations = 0
    worst = -np.inf
    for _ in range(200):
        n = int(rng.integers(2, 9))
        k = oracle.random_transition(rng, n)
        k_tilde = oracle.random_transition(rng, n)
        lhs, rhs = oracle.schweitzer_bound(k, k_tilde)
        worst = max(worst, lhs - rhs)
        if lhs > rhs + 1e-12:
            violations += 1
    return violations == 0, f"{violations} violations, worst margin {worst:.2e}"


def _verify_clamping(rng: RngStream):
    worst_tv = 0.0
    worst_cond = 0.0
    for _ in range(20):
        f, g, _ = oracle.random_compatible_pair(rng, 4, 3)
        sys_ = oracle.FiniteSystem(p_x=oracle.stationary(g @ f), c=f, f=f, g=g)
        for subset in _proper_subsets(4):
            report = oracle.check_clamp_condition(sys_, subset)
            worst_cond = max(worst_cond, report.max_violation)
            worst_tv = max(
                worst_tv,
                oracle.total_variation(report.clamped_stationary, report.restricted_conditional),
            )
    # A pair that shares no joint should break the condition for some subset.
    broken = 0.0
    for _ in range(20):
        f = oracle.random_conditional(rng, 3, 4)
        g = oracle.random_conditional(rng, 4, 3)
        sys_ = oracle.FiniteSystem(p_x=oracle.stationary(g @ f), c=f, f=f, g=g)
        for subset in _proper_subsets(4):
            report = oracle.check_clamp_condition(sys_, subset)
            broken = max(broken, report.max_violation)
        if broken > 1e-6:
            break
    ok = worst_cond < 1e-10 and worst_tv < 1e-8 and broken > 1e-6
    return ok, (
        f"compatible: cond {worst_cond:.2e}, TV {worst_tv:.2e};"
        f" incompatible violation {broken:.2e}"
    )


def _proper_subsets(n: int):
    out = []
    for mask in range(1, (1 << n) - 1):
        out.append([i for i in range(n) if mask >> i & 1])
    return out


def _verify_depnet(rng: RngStream):
    joint = rng.uniform(8) + 0.05
    joint = joint / joint.sum()
    tables = chain_mod.depnet_tables_from_joint(joint, 3)
    pi = oracle.stationary(chain_mod.depnet_scan_matrix(tables))
    tv_consistent = oracle.total_variation(pi, joint)
    # Inconsistent tables: perturb one conditional away from any shared joint.
    tables_bad = tables.copy()
    tables_bad[0] = np.clip(tables_bad[0] + 0.3, 0.05, 0.95)
    pi_bad = oracle.stationary(chain_mod.depnet_scan_matrix(tables_bad))
    run = chain_mod.ChainRun(n_samples=200000, burn_in=2000, seed=rng.spawn().seed)
    states = chain_mod.run_depnet_chain(tables_bad, run)
    counts = np.bincount(chain_mod.state_codes(states), minlength=8)
    tv_sampled = oracle.total_variation(counts / counts.sum(), pi_bad)
    ok = tv_consistent < 1e-10 and tv_sampled < 0.02
    return ok, f"consistent TV {tv_consistent:.2e}, inconsistent sampled TV {tv_sampled:.3f}"


def _verify_gradients(rng: RngStream):
    from .network import backward as net_backward

    worst = 0.0
    for trial, steps in ((0, 1), (1, 1), (2, 4)):
        seed = int(rng.integers(0, 2**31))
        model = init_model(
            [5, 4, 3],
            head="gaussian",
            noise=[(0.2, 0.1), (0.3, 0.0)],
            walkback_depth=max(2, steps),
            rng=RngStream(seed),
        )
        corruptor = AdditiveGaussian(sigma=0.5)
        x0 = RngStream(seed + 1).normal(5)

        def objective(m):
            loss, _, _, _ = trainer.unroll_example(
                m, corruptor, x0, steps, True, m.zero_hidden(), RngStream(seed + 2)
            )
            return loss

        _, records, _, _ = trainer.unroll_example(
            model, corruptor, x0, steps, True, model.zero_hidden(), RngStream(seed + 2)
        )
        grads = net_backward(model, records)
        eps = 1e-6
        for arr, g in ((model.up_weights[0], grads.d_up_weights[0]),
                       (model.up_weights[1], grads.d_up_weights[1]),
                       (model.hidden_biases[1], grads.d_hidden_biases[1])):
            flat = arr.ravel()
            for pos in (0, flat.shape[0] - 1):
                old = flat[pos]
                flat[pos] = old + eps
                hi = objective(model)
                flat[pos] = old - eps
                lo = objective(model)
                flat[pos] = old
                numeric = (hi - lo) / (2 * eps)
                analytic = g.ravel()[pos]
                scale = max(abs(numeric), abs(analytic), 1e-8)
                worst = max(worst, abs(numeric - analytic) / scale)
    return worst < 1e-4, f"worst relative error {worst:.2e}"


def verify_suite(seed: int = 0) -> list[tuple[str, bool, str]]:
    """Run the oracle checks behind every claim the package encodes.

    Returns (name, passed, detail) triples; the CLI prints them as a table.
    """
    rng = RngStream(seed)
    checks = [
        ("bayes-optimal chain is stationary at the data", _verify_bayes_stationary),
        ("walkback refitting reaches a fixed point", _verify_walkback_fixed_point),
        ("stationary perturbation bound holds", _verify_perturbation_bound),
        ("clamped chains match restricted conditionals", _verify_clamping),
        ("random-scan chains match exact stationaries", _verify_depnet),
        ("backprop matches finite differences", _verify_gradients),
    ]
    results = []
    for name, fn in checks:
        try:
            ok, detail = fn(rng.spawn())
        except GsnError as exc:
            ok, detail = False, f"error: {exc}"
        results.append((name, ok, detail))
    return results


def cmd_verify(seed: int) -> int:
    results = verify_suite(seed)
    width = max(len(name) for name, _, _ in results)
    failures = 0
    for name, ok, detail in results:
        status = "PASS" if ok else "FAIL"
        failures += 0 if ok else 1
        print(f"{status}  {name.ljust(width)}  {detail}")
    print(f"{len(results) - failures}/{len(results)} checks passed")
    return 0 if failures == 0 else 1


# ---------------------------------------------------------------------------
# Dispatch


def _add_common_flags(sub):
    sub.add_argument("--config", required=True, help="flat JSON run configuration")
    sub.add_argument("--seed", type=int, default=None, help="override the config seed")
    sub.add_argument("--out", default=None, help="override the output directory")
    sub.add_argument("--epochs", type=int, default=None)
    sub.add_argument("--walkback", default=None, help="none | geom:P | fixed:K")
    sub.add_argument("--clamp", default=None, help="right-half or index list i,j,k")
    sub.add_argument("--samples", type=int, default=None, help="override n_samples")
    sub.add_argument("--burnin", type=int, default=None, help="override burn_in")


def _overrides(args) -> dict:
    return {
        "seed": args.seed,
        "output_dir": args.out,
        "epochs": args.epochs,
        "walkback": args.walkback,
        "clamp": args.clamp,
        "n_samples": args.samples,
        "burn_in": args.burnin,
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="gsn",
        description="Train, sample, and verify denoising-chain generative models.",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    handlers = {
        "train": cmd_train,
        "sample": cmd_sample,
        "inpaint": cmd_inpaint,
        "eval": cmd_eval,
        "synth": cmd_synth,
    }
    for name in handlers:
        _add_common_flags(subparsers.add_parser(name))
    verify_parser = subparsers.add_parser("verify")
    verify_parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    try:
        if args.command == "verify":
            return cmd_verify(args.seed)
        config = load_config(args.config, _overrides(args))
        return handlers[args.command](config)
    except GsnError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
