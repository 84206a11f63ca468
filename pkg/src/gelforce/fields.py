"""Per-pixel field containers: surface normals, depth gradients, height maps."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NormalMap:
    """Per-pixel unit surface normals (n_x, n_y, n_z), n_z > 0."""

    data: np.ndarray  # shape (H, W, 3)

    def __post_init__(self):
        d = np.ascontiguousarray(self.data)
        if d.ndim != 3 or d.shape[2] != 3:
            raise ValueError(f"expected (H, W, 3) normals, got {d.shape}")
        object.__setattr__(self, "data", d)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class GradientField:
    """Per-pixel depth gradients (dH/dx, dH/dy) on the pixel grid."""

    gx: np.ndarray  # shape (H, W)
    gy: np.ndarray  # shape (H, W)

    def __post_init__(self):
        gx = np.ascontiguousarray(self.gx, dtype=np.float64)
        gy = np.ascontiguousarray(self.gy, dtype=np.float64)
        if gx.shape != gy.shape or gx.ndim != 2:
            raise ValueError(f"gx/gy must share an (H, W) shape, got {gx.shape} vs {gy.shape}")
        if not (np.isfinite(gx).all() and np.isfinite(gy).all()):
            raise ValueError("gradient field contains non-finite values")
        object.__setattr__(self, "gx", gx)
        object.__setattr__(self, "gy", gy)

    @property
    def height(self) -> int:
        return self.gx.shape[0]

    @property
    def width(self) -> int:
        return self.gx.shape[1]


@dataclass(frozen=True)
class DepthMap:
    """Real-valued height field on the pixel grid, positive into the gel."""

    h: np.ndarray  # shape (H, W), float64

    def __post_init__(self):
        h = np.ascontiguousarray(self.h, dtype=np.float64)
        if h.ndim != 2:
            raise ValueError(f"expected (H, W) heights, got {h.shape}")
        if not np.isfinite(h).all():
            raise ValueError("depth map contains non-finite values")
        object.__setattr__(self, "h", h)

    @property
    def height(self) -> int:
        return self.h.shape[0]

    @property
    def width(self) -> int:
        return self.h.shape[1]
