"""Force regressors: multi-level-tap CNN variants and the polynomial baseline.

Four CNN variants share a compact residual backbone (stem, then stages with
16/32/64/128 channels):

* ``rgbmod``   RGB input, head fed by pooled taps after stages 2, 3, 4
* ``d``        depth-image input, head fed by the final stage only
* ``dmod``     depth-image input with the same multi-level taps as rgbmod
* ``rgbmod_d`` two backbones (RGB taps + depth final) fused into one head

The baseline maps the maximum byte of the depth image to newtons through a
least-squares cubic.
"""

from __future__ import annotations

import json
import struct
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .datasets import ForceSample
from .image import Image, load_image, resize_bilinear

MODEL_KINDS = ("rgbmod", "d", "dmod", "rgbmod_d")
_STAGES = (16, 32, 64, 128)
_TAP_WIDTH = sum(_STAGES[1:])  # pooled stage-2/3/4 channels feeding the head
MODEL_MAGIC = b"GFFM"


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 64
    lr: float = 4e-5
    epochs: int = 25
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ModelError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ModelError("lr must be > 0")


@dataclass
class ForceNet:
    kind: str
    net: nn.Network
    resolution: tuple[int, int]  # (w, h)
    # learned nets lack normalization layers, so RGB inputs are centred by the
    # sensor's rest frame (a calibration constant stored with the model)
    rgb_reference: np.ndarray | None = None

    @property
    def wants_depth(self) -> bool:
        return self.kind in ("d", "dmod", "rgbmod_d")

    @property
    def wants_rgb(self) -> bool:
        return self.kind in ("rgbmod", "rgbmod_d")

    def parameter_count(self) -> int:
        return sum(p.size for p in self.net.parameters())

    def set_rgb_reference(self, reference: Image) -> None:
        w, h = self.resolution
        if (reference.width, reference.height) != (w, h):
            reference = resize_bilinear(reference, w, h)
        object.__setattr__(self, "rgb_reference", reference.data.astype(np.float32))


def _backbone(c_in: int, rng, dtype) -> tuple[list[nn.Layer], tuple[int, ...]]:
    layers = [
        nn.Conv2D(c_in, _STAGES[0], 3, stride=2, pad=1, rng=rng, dtype=dtype),
        nn.ReLU(),
        nn.MaxPool2D(2),
        nn.ResidualBlock(_STAGES[0], _STAGES[0], 1, rng, dtype),
        nn.ResidualBlock(_STAGES[0], _STAGES[1], 2, rng, dtype),
        nn.ResidualBlock(_STAGES[1], _STAGES[2], 2, rng, dtype),
        nn.ResidualBlock(_STAGES[2], _STAGES[3], 2, rng, dtype),
    ]
    taps = (4, 5, 6)  # stages 2, 3, 4
    return layers, taps


def _head(width: int, rng, dtype) -> list[nn.Layer]:
    return [nn.Dense(width, 64, rng, dtype), nn.ReLU(), nn.Dense(64, 1, rng, dtype)]


def build_model(kind: str, resolution: tuple[int, int] = (160, 120), seed: int = 0,
                dtype=np.float32) -> ForceNet:
    """Construct one of the four regressor variants at the given input size."""
    if kind not in MODEL_KINDS:
        raise ModelError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    w, h = resolution
    if w % 8 or h % 8 or w < 8 or h < 8:
        raise ModelError(f"resolution must be divisible by 8, got {w}x{h}")
    rng = np.random.default_rng(seed)

    if kind == "rgbmod":
        layers, taps = _backbone(3, rng, dtype)
        net = nn.Network([nn.Branch(layers, taps)], _head(_TAP_WIDTH, rng, dtype))
    elif kind == "dmod":
        layers, taps = _backbone(1, rng, dtype)
        net = nn.Network([nn.Branch(layers, taps)], _head(_TAP_WIDTH, rng, dtype))
    elif kind == "d":
        layers, _ = _backbone(1, rng, dtype)
        net = nn.Network([nn.Branch(layers, ())], _head(_STAGES[3], rng, dtype))
    else:  # rgbmod_d
        rgb_layers, taps = _backbone(3, rng, dtype)
        d_layers, _ = _backbone(1, rng, dtype)
        net = nn.Network([nn.Branch(rgb_layers, taps), nn.Branch(d_layers, ())],
                         _head(_TAP_WIDTH + _STAGES[3], rng, dtype))
    return ForceNet(kind=kind, net=net, resolution=(w, h))


# ---------------------------------------------------------------------------
# input preparation


def _prep(img: Image, resolution, channels: int, dtype) -> np.ndarray:
    if img.channels != channels:
        raise ModelError(f"expected {channels}-channel input, got {img.channels}")
    w, h = resolution
    if (img.width, img.height) != (w, h):
        img = resize_bilinear(img, w, h)
    return img.data.astype(dtype)[None]


def model_inputs(model: ForceNet, frame: Image | None, depth: Image | None):
    dtype = model.net.parameters()[0].dtype
    if model.wants_depth and depth is None:
        raise ModelError(f"model kind {model.kind!r} requires a depth image")
    if not model.wants_depth and depth is not None:
        raise ModelError(f"model kind {model.kind!r} does not consume depth")
    if model.wants_rgb and frame is None:
        raise ModelError(f"model kind {model.kind!r} requires an RGB frame")

    def rgb():
        x = _prep(frame, model.resolution, 3, dtype)
        if model.rgb_reference is not None:
            x = x - model.rgb_reference.astype(dtype)
        return x

    if model.kind == "rgbmod":
        return rgb()
    if model.kind in ("d", "dmod"):
        return _prep(depth, model.resolution, 1, dtype)
    return [rgb(), _prep(depth, model.resolution, 1, dtype)]


def predict_force(model: ForceNet, frame: Image | None, depth: Image | None = None,
                  ablate_taps: tuple[int, ...] = ()) -> float:
    """Single forward pass to a scalar force in newtons.

    `ablate_taps` zeroes the pooled features of the given backbone tap
    positions (0-based among the model's taps); tests use it to verify the
    multi-level head wiring.
    """
    xs = model_inputs(model, frame, depth)
    overrides = None
    if ablate_taps:
        taps = model.net.branches[0].taps
        dtype = model.net.parameters()[0].dtype
        overrides = {}
        for t in ablate_taps:
            if t < len(taps):
                li = taps[t]
                width = _STAGES[1 + t]
                overrides[(0, li)] = np.zeros((1, width), dtype=dtype)
    out, _ = nn.forward(model.net, xs, tap_overrides=overrides)
    return float(out[0, 0])


# ---------------------------------------------------------------------------
# batched sample loading


class SampleLoader:
    """Loads (inputs, force) batches from ForceSamples, caching decoded images."""

    def __init__(self, model: ForceNet, cache: bool = True):
        self.model = model
        self.resolution = model.resolution
        self.dtype = model.net.parameters()[0].dtype
        self._cache: dict | None = {} if cache else None

    def _load(self, path, channels) -> np.ndarray:
        key = (str(path), channels)
        if self._cache is not None and key in self._cache:
            return self._cache[key]
        img = load_image(path)
        if img.channels != channels:
            raise ModelError(f"{path}: expected {channels} channels, got {img.channels}")
        w, h = self.resolution
        if (img.width, img.height) != (w, h):
            img = resize_bilinear(img, w, h)
        arr = (img.data * 255).astype(np.uint8)  # cache quantized to save memory
        if self._cache is not None:
            self._cache[key] = arr
        return arr

    def batch(self, samples: list[ForceSample]):
        xs = []
        if self.model.wants_rgb:
            rgb = np.stack([self._load(s.frame_path, 3) for s in samples])
            x = rgb.astype(self.dtype) / 255.0
            if self.model.rgb_reference is not None:
                x -= self.model.rgb_reference.astype(self.dtype)
            xs.append(x)
        if self.model.wants_depth:
            for s in samples:
                if s.depth_path is None:
                    raise ModelError(f"sample {s.frame_path} lacks a depth image")
            dep = np.stack([self._load(s.depth_path, 1) for s in samples])
            xs.append(dep.astype(self.dtype) / 255.0)
        targets = np.array([[s.force_n] for s in samples], dtype=self.dtype)
        return (xs[0] if len(xs) == 1 else xs), targets


# ---------------------------------------------------------------------------
# training


def train(model: ForceNet, train_samples: list[ForceSample],
          val_samples: list[ForceSample], cfg: TrainConfig,
          loader: SampleLoader | None = None) -> tuple[ForceNet, list[dict]]:
    """Adam/MSE training; returns the best-validation-epoch weights."""
    if not train_samples or not val_samples:
        raise ModelError("training and validation sets must be non-empty")
    for s in train_samples + val_samples:
        if not (0.5 <= s.force_n <= 20.0):
            raise ModelError(f"ground-truth force {s.force_n} N outside [0.5, 20] N")

    loader = loader or SampleLoader(model)
    rng = np.random.default_rng(cfg.seed)
    state = nn.AdamState.for_network(model.net, lr=cfg.lr)

    def eval_mse(samples) -> float:
        se, n = 0.0, 0
        for s0 in range(0, len(samples), cfg.batch_size):
            xs, ys = loader.batch(samples[s0:s0 + cfg.batch_size])
            out, _ = nn.forward(model.net, xs)
            se += float(((out - ys).astype(np.float64) ** 2).sum())
            n += len(ys)
        return se / n

    history = []
    best_val = np.inf
    best_params = [p.copy() for p in model.net.parameters()]
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train_samples))
        losses = []
        for s0 in range(0, len(order), cfg.batch_size):
            idx = order[s0:s0 + cfg.batch_size]
            xs, ys = loader.batch([train_samples[i] for i in idx])
            out, cache = nn.forward(model.net, xs)
            loss, dout = nn.mse_loss(out, ys)
            if not np.isfinite(loss):
                raise nn.TrainingError(f"non-finite loss at epoch {epoch}")
            grads = nn.backward(model.net, cache, dout)
            nn.adam_step(model.net, grads, state)
            losses.append(loss)
        val_loss = eval_mse(val_samples)
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                        "val_loss": val_loss})
        if val_loss < best_val:
            best_val = val_loss
            best_params = [p.copy() for p in model.net.parameters()]
    model.net.set_parameters(best_params)
    return model, history


def predict_samples(model: ForceNet, samples: list[ForceSample],
                    loader: SampleLoader | None = None,
                    batch_size: int = 64) -> np.ndarray:
    loader = loader or SampleLoader(model)
    preds = []
    for s0 in range(0, len(samples), batch_size):
        xs, _ = loader.batch(samples[s0:s0 + batch_size])
        out, _ = nn.forward(model.net, xs)
        preds.append(out[:, 0].astype(np.float64))
    return np.concatenate(preds)


# ---------------------------------------------------------------------------
# model files: kind header + embedded weights


def save_force_model(model: ForceNet, path) -> None:
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        kind = model.kind.encode()
        f.write(struct.pack("<H", len(kind)))
        f.write(kind)
        f.write(struct.pack("<II", *model.resolution))
        if model.rgb_reference is not None:
            ref = np.ascontiguousarray(model.rgb_reference, dtype="<f4")
            f.write(struct.pack("<I", ref.size))
            f.write(ref.tobytes())
        else:
            f.write(struct.pack("<I", 0))
        nn.save_weights(model.net, f)


def load_force_model(path) -> ForceNet:
    with open(path, "rb") as f:
        if f.read(4) != MODEL_MAGIC:
            raise ModelError(f"{path}: not a force model file")
        (klen,) = struct.unpack("<H", f.read(2))
        kind = f.read(klen).decode()
        w, h = struct.unpack("<II", f.read(8))
        (refsize,) = struct.unpack("<I", f.read(4))
        ref = None
        if refsize:
            ref = np.frombuffer(f.read(4 * refsize), dtype="<f4").reshape(h, w, 3).copy()
        net = nn.load_weights(f)
    return ForceNet(kind=kind, net=net, resolution=(w, h), rgb_reference=ref)


def measure_latency(model: ForceNet, frame: Image | None, depth: Image | None = None,
                    repeats: int = 15) -> float:
    """Median single-frame inference time in seconds (after one warmup)."""
    predict_force(model, frame, depth)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        predict_force(model, frame, depth)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


# ---------------------------------------------------------------------------
# polynomial max-deformation baseline


@dataclass(frozen=True)
class PolyModel:
    """Cubic mapping max-deformation byte value -> newtons."""

    coefficients: tuple[float, float, float, float]  # c0..c3
    residual: float  # RMS fit residual in newtons


def max_deformation_byte(depth_image: Image) -> int:
    """Largest 8-bit value of a depth image (round-half-up quantization)."""
    if depth_image.channels != 1:
        raise ModelError("expected a single-channel depth image")
    return int(np.floor(depth_image.data.astype(np.float64) * 255.0 + 0.5).max())


def fit_poly_baseline(samples: list[tuple[float, float]]) -> PolyModel:
    """Least-squares cubic through (max_deformation_byte, force_n) pairs."""
    if len({round(float(d), 9) for d, _ in samples}) < 4:
        raise ModelError("need >= 4 distinct deformation values for a cubic fit")
    d = np.array([s[0] for s in samples], dtype=np.float64)
    f = np.array([s[1] for s in samples], dtype=np.float64)
    coefs = np.polynomial.polynomial.polyfit(d, f, deg=3)
    pred = np.polynomial.polynomial.polyval(d, coefs)
    rms = float(np.sqrt(np.mean((pred - f) ** 2)))
    return PolyModel(coefficients=tuple(float(c) for c in coefs), residual=rms)


def poly_predict(model: PolyModel, depth_image: Image) -> float:
    """Evaluate the cubic at the image's maximum byte value."""
    byte = max_deformation_byte(depth_image)
    return float(np.polynomial.polynomial.polyval(byte, np.array(model.coefficients)))


def save_poly_model(model: PolyModel, path) -> None:
    with open(path, "w") as f:
        json.dump({"coefficients": list(model.coefficients),
                   "residual": model.residual}, f, indent=2)


def load_poly_model(path) -> PolyModel:
    with open(path) as f:
        d = json.load(f)
    return PolyModel(coefficients=tuple(d["coefficients"]), residual=float(d["residual"]))
