"""RGB frame -> filtered depth image pipeline.

Normals are inferred per pixel by the calibrated inverse-reflectance MLP,
converted to depth gradients, integrated by the sine-transform Poisson
solver, scaled into [0, 1] by a global calibration-time scale, and masked by
reference-frame differencing to suppress background noise.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np
from scipy.ndimage import binary_opening

from . import nn
from .calibration import SpherePress, build_calibration_set, pixel_positions, sphere_normals, train_color_normal_model
from .fields import DepthMap, GradientField, NormalMap
from .image import ContactMask, Image
from .poisson import dst_poisson_solve

_NZ_CLAMP = 0.05  # bounds gradients at steep indenter walls
DEFAULT_MASK_THRESHOLD = 0.04


class PipelineError(ValueError):
    pass


@dataclass(frozen=True)
class ScaleRecord:
    """Global depth scale fixed at calibration time."""

    max_depth: float
    calibrated_at: str = ""
    mlp_weights: str = ""

    def __post_init__(self):
        if not self.max_depth > 0:
            raise PipelineError(f"max_depth must be positive, got {self.max_depth}")


def save_scale_record(rec: ScaleRecord, path) -> None:
    with open(path, "w") as f:
        json.dump({"max_depth": rec.max_depth, "calibrated_at": rec.calibrated_at,
                   "mlp_weights": rec.mlp_weights}, f, indent=2)


def load_scale_record(path) -> ScaleRecord:
    with open(path) as f:
        d = json.load(f)
    return ScaleRecord(max_depth=float(d["max_depth"]),
                       calibrated_at=d.get("calibrated_at", ""),
                       mlp_weights=d.get("mlp_weights", ""))


def _mlp_arity(mlp: nn.Network) -> int:
    for lyr in mlp.branches[0].layers:
        if lyr.kind == "dense":
            return lyr.n_in
    raise PipelineError("model has no dense layer")


def infer_normals(mlp: nn.Network, frame: Image) -> NormalMap:
    """Evaluate the inverse-reflectance model at every pixel.

    Raw outputs get their z component clamped to >= 0.05 and are then
    renormalized to unit length.
    """
    if _mlp_arity(mlp) != 5:
        raise PipelineError(f"expected a 5-input model (r,g,b,x,y), got arity {_mlp_arity(mlp)}")
    if frame.channels != 3:
        raise PipelineError("normal inference needs an RGB frame")
    h, w = frame.height, frame.width
    xn, yn = pixel_positions(w, h)
    feats = np.concatenate([frame.data.reshape(-1, 3),
                            xn.reshape(-1, 1).astype(np.float32),
                            yn.reshape(-1, 1).astype(np.float32)], axis=1)
    dtype = mlp.parameters()[0].dtype
    outs = []
    for s in range(0, feats.shape[0], 1 << 17):
        out, _ = nn.forward(mlp, feats[s:s + (1 << 17)].astype(dtype))
        outs.append(out)
    raw = np.concatenate(outs).astype(np.float64)
    raw[:, 2] = np.maximum(raw[:, 2], _NZ_CLAMP)
    raw /= np.linalg.norm(raw, axis=1, keepdims=True)
    return NormalMap(raw.reshape(h, w, 3))


def normals_to_gradients(n: NormalMap) -> GradientField:
    """Depth gradients from normals: gx = n_x/n_z, gy = n_y/n_z."""
    nx, ny, nz = n.data[:, :, 0], n.data[:, :, 1], n.data[:, :, 2]
    return GradientField(nx / nz, ny / nz)


def reference_gradients(mlp: nn.Network, reference: Image) -> GradientField:
    """Inferred gradients of the rest frame, used to tare reconstructions."""
    return normals_to_gradients(infer_normals(mlp, reference))


def reconstruct_depth(mlp: nn.Network, frame: Image,
                      reference: Image | GradientField | None = None) -> DepthMap:
    """Full normals -> gradients -> Poisson integration, oriented into the gel.

    Gradients follow the convention gx = n_x/n_z, which integrates to the
    negated camera-facing height; the pipeline restores depth-positive-into-
    gel by flipping the sign of the solve. When a reference frame (or its
    precomputed gradients) is given, its inferred gradients are subtracted
    first, so the solve integrates the deformation relative to the rest
    surface and any estimator bias at rest colors cancels.
    """
    g = normals_to_gradients(infer_normals(mlp, frame))
    if reference is not None:
        gr = reference if isinstance(reference, GradientField) else \
            reference_gradients(mlp, reference)
        if (gr.height, gr.width) != (g.height, g.width):
            raise PipelineError("reference dimensions do not match the frame")
        g = GradientField(g.gx - gr.gx, g.gy - gr.gy)
    dm = dst_poisson_solve(g)
    return DepthMap(-dm.h)


def depth_to_image(h: DepthMap, scale: ScaleRecord) -> Image:
    """Scale heights into [0, 1] (bytes 0-255) by the global max depth."""
    d = np.clip(h.h / scale.max_depth, 0.0, 1.0).astype(np.float32)
    return Image(d[:, :, None])


def contact_mask_from_diff(frame: Image, reference: Image,
                           threshold: float = DEFAULT_MASK_THRESHOLD) -> ContactMask:
    """Channel-max absolute difference above threshold, despeckled by one
    3x3 morphological opening."""
    if frame.data.shape != reference.data.shape:
        raise PipelineError(f"frame {frame.data.shape} vs reference "
                            f"{reference.data.shape} dimension mismatch")
    diff = np.abs(frame.data.astype(np.float32) - reference.data).max(axis=2)
    raw = diff > threshold
    opened = binary_opening(raw, structure=np.ones((3, 3), dtype=bool))
    return ContactMask(opened)


def apply_contact_mask(d: Image, m: ContactMask) -> Image:
    """Zero the depth image outside the contact mask."""
    if d.channels != 1:
        raise PipelineError("expected a single-channel depth image")
    if (d.height, d.width) != (m.height, m.width):
        raise PipelineError(f"depth {d.height}x{d.width} vs mask "
                            f"{m.height}x{m.width} dimension mismatch")
    out = d.data.copy()
    out[~m.data] = 0.0
    return Image(out)


def reconstruct_depth_image(mlp: nn.Network, frame: Image, reference: Image,
                            scale: ScaleRecord,
                            mask_threshold: float = DEFAULT_MASK_THRESHOLD,
                            reference_grads: GradientField | None = None) -> Image:
    """Frame -> masked 0-255 depth image (the pipeline's end product)."""
    di = depth_to_image(reconstruct_depth(mlp, frame, reference_grads or reference), scale)
    mask = contact_mask_from_diff(frame, reference, mask_threshold)
    return apply_contact_mask(di, mask)


def calibrate_sensor(presses: list[SpherePress], reference: Image | None = None,
                     seed: int = 0, epochs: int = 600, lr: float = 2e-3,
                     percentile: float = 99.0):
    """Train the inverse-reflectance MLP and fix the global depth scale.

    The scale is the given percentile of reconstructed in-contact heights
    over the calibration presses, so one calibration pins the byte scaling
    of every later frame. Returns (mlp, history, max_depth).
    """
    calset = build_calibration_set(presses)
    mlp, history = train_color_normal_model(calset, seed=seed, epochs=epochs, lr=lr)
    ref_g = reference_gradients(mlp, reference) if reference is not None else None
    heights = []
    for p in presses:
        dm = reconstruct_depth(mlp, p.frame, ref_g)
        _, mask = sphere_normals(p)
        heights.append(dm.h[mask.data])
    all_h = np.concatenate(heights)
    max_depth = float(np.percentile(all_h[all_h > 0], percentile))
    if max_depth <= 0:
        raise PipelineError("calibration produced a nonpositive depth scale")
    return mlp, history, max_depth


def timestamp_now() -> str:
    return datetime.now(timezone.utc).isoformat()
