"""Image containers and raster file IO shared by the whole pipeline.

Pixel values are reals in [0, 1] stored as float32 (solvers promote to
float64 internally where tolerances require it). Arrays are frozen after
construction so images can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from PIL import Image as PILImage


class ImageError(ValueError):
    """Raised for malformed images or undecodable raster files."""


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Image:
    """H x W x C raster with C in {1, 3} and values in [0, 1], row-major."""

    data: np.ndarray  # shape (H, W, C), float32

    def __post_init__(self):
        d = self.data
        if d.ndim == 2:
            d = d[:, :, None]
        if d.ndim != 3 or d.shape[2] not in (1, 3):
            raise ImageError(f"expected (H, W, 1|3) data, got shape {d.shape}")
        d = np.ascontiguousarray(d, dtype=np.float32)
        if d.size and (d.min() < 0.0 or d.max() > 1.0):
            raise ImageError("pixel values must lie in [0, 1]")
        object.__setattr__(self, "data", _freeze(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True)
class ContactMask:
    """Boolean contact patch with the same dimensions as the image it masks."""

    data: np.ndarray  # shape (H, W), bool

    def __post_init__(self):
        d = np.ascontiguousarray(self.data, dtype=bool)
        if d.ndim != 2:
            raise ImageError(f"expected (H, W) mask, got shape {d.shape}")
        object.__setattr__(self, "data", _freeze(d))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def load_image(path) -> Image:
    """Load an 8-bit grayscale or RGB raster file; byte v maps to v/255 exactly."""
    try:
        with PILImage.open(path) as f:
            if f.mode not in ("L", "RGB"):
                if f.mode in ("I;16", "I", "F"):
                    raise ImageError(f"unsupported bit depth in {path} (mode {f.mode})")
                f = f.convert("RGB" if len(f.getbands()) >= 3 else "L")
            arr = np.asarray(f, dtype=np.uint8)
    except FileNotFoundError:
        raise FileNotFoundError(f"image file not found: {path}")
    except ImageError:
        raise
    except Exception as e:  # PIL raises a zoo of decode errors
        raise ImageError(f"cannot decode image file {path}: {e}") from e
    return Image(arr.astype(np.float32) / 255.0)


def save_image(img: Image, path) -> None:
    """Write 8-bit grayscale/RGB. Quantization is round-half-up so that
    load(save(img)) reproduces every byte."""
    b = np.floor(img.data.astype(np.float64) * 255.0 + 0.5).astype(np.uint8)
    if img.channels == 1:
        pil = PILImage.fromarray(b[:, :, 0], mode="L")
    else:
        pil = PILImage.fromarray(b, mode="RGB")
    pil.save(path)


def resize_bilinear(img: Image, new_w: int, new_h: int) -> Image:
    """Bilinear resample with half-pixel-centre coordinates.

    Identity resizes are bitwise exact and constant images stay constant.
    """
    if new_w < 1 or new_h < 1:
        raise ImageError(f"target dimensions must be >= 1, got {new_w}x{new_h}")
    h, w = img.height, img.width
    if (new_w, new_h) == (w, h):
        return Image(img.data.copy())

    sx = w / new_w
    sy = h / new_h
    xs = np.clip((np.arange(new_w) + 0.5) * sx - 0.5, 0.0, w - 1.0)
    ys = np.clip((np.arange(new_h) + 0.5) * sy - 0.5, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = (xs - x0).astype(np.float32)[None, :, None]
    fy = (ys - y0).astype(np.float32)[:, None, None]

    d = img.data
    top = d[y0[:, None], x0[None, :], :] * (1 - fx) + d[y0[:, None], x1[None, :], :] * fx
    bot = d[y1[:, None], x0[None, :], :] * (1 - fx) + d[y1[:, None], x1[None, :], :] * fx
    out = top * (1 - fy) + bot * fy
    return Image(np.clip(out, 0.0, 1.0))
