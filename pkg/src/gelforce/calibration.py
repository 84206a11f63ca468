"""Sphere-press calibration: ground-truth normals and the color-to-normal dataset.

A press of a sphere of known radius produces an analytic normal map inside
its contact circle; pairing those normals with the observed pixel colors and
positions yields the training set for the inverse-reflectance MLP.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn, simulate
from .fields import NormalMap
from .image import ContactMask, Image, load_image


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class SpherePress:
    """One calibration frame: a sphere of known radius pressed to a known depth."""

    center_px: tuple[float, float]  # (x, y)
    radius_px: float
    press_depth_px: float
    frame: Image

    def __post_init__(self):
        if not (0 < self.press_depth_px <= self.radius_px):
            raise CalibrationError(
                f"press depth must satisfy 0 < depth <= radius, got "
                f"{self.press_depth_px} vs radius {self.radius_px}")
        c = self.contact_radius
        x, y = self.center_px
        if (x - c < 0 or x + c > self.frame.width - 1
                or y - c < 0 or y + c > self.frame.height - 1):
            raise CalibrationError("contact circle does not fit inside the frame")

    @property
    def contact_radius(self) -> float:
        r, d = self.radius_px, self.press_depth_px
        return float(np.sqrt(r * r - (r - d) ** 2))


@dataclass(frozen=True)
class CalibrationSet:
    """Pixel records (r, g, b, x_norm, y_norm) -> unit normal targets."""

    inputs: np.ndarray  # (N, 5) float32
    targets: np.ndarray  # (N, 3) float32
    press_count: int

    def __post_init__(self):
        norms = np.linalg.norm(self.targets.astype(np.float64), axis=1)
        if self.targets.size and np.abs(norms - 1.0).max() > 1e-6:
            raise CalibrationError("calibration targets must be unit vectors")

    def __len__(self) -> int:
        return self.inputs.shape[0]


def sphere_normals(press: SpherePress) -> tuple[NormalMap, ContactMask]:
    """Analytic cap normals inside the contact circle; (0, 0, 1) outside.

    The cap normal at a pixel is the outward sphere normal of the camera-facing
    cap: ((x - cx)/R, (y - cy)/R, sqrt(R^2 - r^2)/R), a unit vector by
    construction.
    """
    if press.press_depth_px <= 0:
        raise CalibrationError("degenerate contact circle: press depth must be > 0")
    h, w = press.frame.height, press.frame.width
    dx, dy = np.meshgrid(np.arange(w) - press.center_px[0],
                         np.arange(h) - press.center_px[1])
    r2 = dx * dx + dy * dy
    c = press.contact_radius
    mask = r2 <= c * c

    rad = press.radius_px
    nz = np.sqrt(np.maximum(rad * rad - r2, 0.0)) / rad
    n = np.zeros((h, w, 3), dtype=np.float64)
    n[:, :, 2] = 1.0
    n[mask, 0] = dx[mask] / rad
    n[mask, 1] = dy[mask] / rad
    n[mask, 2] = nz[mask]
    return NormalMap(n), ContactMask(mask)


def pixel_positions(width: int, height: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel (x_norm, y_norm) grids normalized to [0, 1]."""
    xs = np.arange(width, dtype=np.float64) / max(width - 1, 1)
    ys = np.arange(height, dtype=np.float64) / max(height - 1, 1)
    return np.meshgrid(xs, ys)


def build_calibration_set(presses: list[SpherePress]) -> CalibrationSet:
    """One record per in-mask pixel, in press order then row-major pixel order."""
    if not presses:
        raise CalibrationError("need at least one press")
    dims = {(p.frame.width, p.frame.height, p.frame.channels) for p in presses}
    if len(dims) != 1:
        raise CalibrationError(f"press frames disagree on dimensions: {sorted(dims)}")
    w, h, ch = dims.pop()
    if ch != 3:
        raise CalibrationError("calibration frames must be RGB")
    xn, yn = pixel_positions(w, h)

    ins, tgts = [], []
    for p in presses:
        normals, mask = sphere_normals(p)
        m = mask.data
        rgb = p.frame.data[m]
        pos = np.stack([xn[m], yn[m]], axis=1)
        ins.append(np.concatenate([rgb, pos.astype(np.float32)], axis=1))
        tgts.append(normals.data[m].astype(np.float32))
    return CalibrationSet(np.concatenate(ins).astype(np.float32),
                          np.concatenate(tgts).astype(np.float32), len(presses))


# ---------------------------------------------------------------------------
# press record sidecar files: one JSON object per line


def write_press_records(records: list[dict], path) -> None:
    with open(path, "w") as f:
        for r in records:
            f.write(json.dumps(r) + "\n")


def read_press_records(path) -> list[dict]:
    out = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out


def load_presses(records_path, frames_dir=None) -> list[SpherePress]:
    records_path = Path(records_path)
    base = Path(frames_dir) if frames_dir else records_path.parent
    presses = []
    for r in read_press_records(records_path):
        frame = load_image(base / r["frame"])
        presses.append(SpherePress(center_px=tuple(r["center_px"]),
                                   radius_px=float(r["radius_px"]),
                                   press_depth_px=float(r["press_depth_px"]),
                                   frame=frame))
    return presses


# ---------------------------------------------------------------------------
# synthetic calibration sessions


def generate_sphere_presses(n: int, grid: tuple[int, int], seed: int,
                            radii: tuple[float, ...] = (9.0, 12.0, 15.0),
                            depth_rel: tuple[float, float] = (0.12, 0.6),
                            noise_sigma: float = 0.01,
                            lights: simulate.LightingModel | None = None,
                            curvature_radius: float | None = None
                            ) -> tuple[list[SpherePress], Image]:
    """Render n sphere presses at grid locations.

    Returns (presses, reference) where the reference is the noise-free
    rendering of the undeformed gel (the rest frame the pipeline diffs
    against).
    """
    rng = np.random.default_rng(seed)
    lights = lights or simulate.default_lighting()
    margin = max(radii) + 4.0
    w, h = grid
    presses = []
    for i in range(n):
        rad = float(rng.choice(radii))
        depth = float(rng.uniform(depth_rel[0], depth_rel[1]) * rad)
        # continuous locations: position inputs must interpolate, not memorize
        center = (float(rng.uniform(margin, w - 1 - margin)),
                  float(rng.uniform(margin, h - 1 - margin)))
        scene = simulate.PressScene(
            simulate.Indenter("sphere", {"radius": rad}, id=f"calib_sphere_{i}"),
            center, depth, curvature_radius=curvature_radius)
        frame, _ = simulate.render_scene(scene, grid, lights)
        frame = simulate.add_pixel_noise(frame, noise_sigma, rng)
        presses.append(SpherePress(center, rad, depth, frame))
    rest = simulate.DatasetSpec(indenters=[simulate.Indenter("sphere", {"radius": 1.0}, "_")],
                                grid=grid, curvature_radius=curvature_radius,
                                lights=lights)
    return presses, simulate.reference_frame(rest)


# ---------------------------------------------------------------------------
# inverse-reflectance model


def build_color_normal_mlp(seed: int, hidden: int = 96, dtype=np.float32) -> nn.Network:
    """MLP mapping (r, g, b, x_norm, y_norm) to a raw normal triple."""
    rng = np.random.default_rng(seed)
    layers = [nn.Dense(5, hidden, rng, dtype), nn.Tanh(),
              nn.Dense(hidden, hidden, rng, dtype), nn.Tanh(),
              nn.Dense(hidden, 3, rng, dtype)]
    return nn.Network([nn.Branch(layers)], head=[])


def train_color_normal_model(calset: CalibrationSet, seed: int = 0,
                             epochs: int = 600, lr: float = 2e-3,
                             batch_size: int = 1024, val_fraction: float = 0.1,
                             weight_decay: float = 1e-4
                             ) -> tuple[nn.Network, list[dict]]:
    """Fit the inverse-reflectance MLP by Adam on mean-squared normal error.

    A little decoupled weight decay keeps the position inputs from memorizing
    individual press locations (the color-to-normal map itself is smooth).
    """
    net = build_color_normal_mlp(seed)
    state = nn.AdamState.for_network(net, lr=lr, weight_decay=weight_decay)
    rng = np.random.default_rng(seed + 1)

    n = len(calset)
    order = rng.permutation(n)
    n_val = max(1, int(n * val_fraction))
    val_idx, train_idx = order[:n_val], order[n_val:]
    xv, yv = calset.inputs[val_idx], calset.targets[val_idx]
    xt, yt = calset.inputs[train_idx], calset.targets[train_idx]

    history = []
    for epoch in range(epochs):
        state.lr = lr * 0.5 ** (4 * epoch // max(epochs, 1))  # step decay
        perm = rng.permutation(len(xt))
        losses = []
        for s in range(0, len(xt), batch_size):
            bi = perm[s:s + batch_size]
            out, cache = nn.forward(net, xt[bi])
            loss, dout = nn.mse_loss(out, yt[bi])
            grads = nn.backward(net, cache, dout)
            nn.adam_step(net, grads, state)
            losses.append(loss)
        val_out, _ = nn.forward(net, xv)
        val_loss, _ = nn.mse_loss(val_out, yv)
        history.append({"epoch": epoch, "train_loss": float(np.mean(losses)),
                        "val_loss": val_loss})
    return net, history
