"""Trainable layer primitives.

Activations use NHWC layout: feature maps are (N, H, W, C) and vectors are
(N, F). Forward passes return an opaque cache consumed by the matching
backward pass; layers hold parameters but never store activations, so a
layer instance can serve concurrent forward passes.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def kaiming_uniform(shape, fan_in: int, rng: np.random.Generator, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Layer:
    """Base layer: `params` lists this layer's arrays in a fixed order."""

    kind: str = "base"

    def __init__(self):
        self.params: list[np.ndarray] = []

    def param_names(self) -> list[str]:
        return [f"p{i}" for i in range(len(self.params))]

    def config(self) -> dict:
        return {}

    def forward(self, x):
        raise NotImplementedError

    def backward(self, cache, dy):
        raise NotImplementedError


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.n_in = n_in
        self.n_out = n_out
        w = kaiming_uniform((n_in, n_out), n_in, rng, dtype)
        b = np.zeros(n_out, dtype=dtype)
        self.params = [w, b]

    def param_names(self):
        return ["weight", "bias"]

    def config(self):
        return {"n_in": self.n_in, "n_out": self.n_out}

    def forward(self, x):
        w, b = self.params
        return x @ w + b, x

    def backward(self, cache, dy):
        w, _ = self.params
        x = cache
        dw = x.T @ dy
        db = dy.sum(axis=0)
        dx = dy @ w.T
        return dx, [dw, db]


class ReLU(Layer):
    kind = "relu"

    def forward(self, x):
        y = np.maximum(x, 0)
        return y, (x > 0)

    def backward(self, cache, dy):
        return dy * cache, []


class Tanh(Layer):
    kind = "tanh"

    def forward(self, x):
        y = np.tanh(x)
        return y, y

    def backward(self, cache, dy):
        y = cache
        return dy * (1.0 - y * y), []


def _im2col(x, kh, kw, stride, pad):
    """(N, H, W, C) -> column matrix (N*OH*OW, kh*kw*C) plus output dims.

    Columns keep the channel axis innermost so the gather copies contiguous
    C-length runs (the naive (C, kh, kw) order is several times slower).
    """
    n, h, w, c = x.shape
    if pad:
        x = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    win = sliding_window_view(x, (kh, kw), axis=(1, 2))  # (N, H', W', C, kh, kw)
    win = win[:, ::stride, ::stride][:, :oh, :ow].transpose(0, 1, 2, 4, 5, 3)
    cols = np.ascontiguousarray(win).reshape(n * oh * ow, kh * kw * c)
    return cols, oh, ow


class Conv2D(Layer):
    kind = "conv2d"

    def __init__(self, c_in: int, c_out: int, ksize: int, stride: int = 1, pad: int = 0,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        self.c_in, self.c_out = c_in, c_out
        self.ksize, self.stride, self.pad = ksize, stride, pad
        rng = rng or np.random.default_rng(0)
        fan_in = c_in * ksize * ksize
        # weight layout (kh*kw*C, c_out) matches the im2col column order
        w = kaiming_uniform((fan_in, c_out), fan_in, rng, dtype)
        b = np.zeros(c_out, dtype=dtype)
        self.params = [w, b]

    def param_names(self):
        return ["weight", "bias"]

    def config(self):
        return {"c_in": self.c_in, "c_out": self.c_out, "ksize": self.ksize,
                "stride": self.stride, "pad": self.pad}

    def forward(self, x):
        w, b = self.params
        n = x.shape[0]
        cols, oh, ow = _im2col(x, self.ksize, self.ksize, self.stride, self.pad)
        y = (cols @ w + b).reshape(n, oh, ow, self.c_out)
        return y, (cols, x.shape)

    def backward(self, cache, dy):
        w, _ = self.params
        cols, x_shape = cache
        n, h, wid, c = x_shape
        k, s, p = self.ksize, self.stride, self.pad
        oh, ow = dy.shape[1], dy.shape[2]
        dy2 = dy.reshape(n * oh * ow, self.c_out)

        dw = cols.T @ dy2
        db = dy2.sum(axis=0)

        dcols = (dy2 @ w.T).reshape(n, oh, ow, k, k, c)
        dxp = np.zeros((n, h + 2 * p, wid + 2 * p, c), dtype=dy.dtype)
        for i in range(k):
            for j in range(k):
                dxp[:, i:i + s * oh:s, j:j + s * ow:s, :] += dcols[:, :, :, i, j, :]
        dx = dxp[:, p:p + h, p:p + wid, :] if p else dxp
        return dx, [dw, db]


class MaxPool2D(Layer):
    """Non-overlapping max pool (kernel == stride). Gradient routing breaks
    ties in fixed window order (top-left first)."""

    kind = "maxpool2d"

    def __init__(self, ksize: int = 2):
        super().__init__()
        self.ksize = ksize

    def config(self):
        return {"ksize": self.ksize}

    def _windows(self, x):
        k = self.ksize
        n, h, w, c = x.shape
        oh, ow = h // k, w // k
        return [x[:, i:oh * k:k, j:ow * k:k, :] for i in range(k) for j in range(k)]

    def forward(self, x):
        y = np.maximum.reduce(self._windows(x))
        return y, (x, y)

    def backward(self, cache, dy):
        x, y = cache
        k = self.ksize
        n, h, w, c = x.shape
        oh, ow = dy.shape[1], dy.shape[2]
        dx = np.zeros(x.shape, dtype=dy.dtype)
        taken = np.zeros(dy.shape, dtype=bool)
        for i in range(k):
            for j in range(k):
                win = x[:, i:oh * k:k, j:ow * k:k, :]
                hit = (win == y) & ~taken
                taken |= hit
                dx[:, i:oh * k:k, j:ow * k:k, :] = np.where(hit, dy, 0)
        return dx, []


class GlobalAvgPool(Layer):
    kind = "gap"

    def forward(self, x):
        return x.mean(axis=(1, 2)), x.shape

    def backward(self, cache, dy):
        n, h, w, c = cache
        dx = np.broadcast_to(dy[:, None, None, :] / (h * w), cache).astype(dy.dtype)
        return np.ascontiguousarray(dx), []


class ResidualBlock(Layer):
    """Two 3x3 convs with a shortcut; the shortcut is the identity when the
    shape is preserved and a 1x1 strided projection otherwise."""

    kind = "resblock"

    def __init__(self, c_in: int, c_out: int, stride: int = 1,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.c_in, self.c_out, self.stride = c_in, c_out, stride
        self.conv1 = Conv2D(c_in, c_out, 3, stride, 1, rng, dtype)
        self.conv2 = Conv2D(c_out, c_out, 3, 1, 1, rng, dtype)
        self.relu = ReLU()
        self.proj = None
        if stride != 1 or c_in != c_out:
            self.proj = Conv2D(c_in, c_out, 1, stride, 0, rng, dtype)
        self._sub = [self.conv1, self.conv2] + ([self.proj] if self.proj else [])
        self.params = [p for lyr in self._sub for p in lyr.params]

    def param_names(self):
        names = []
        tags = ["conv1", "conv2"] + (["proj"] if self.proj else [])
        for tag, lyr in zip(tags, self._sub):
            names += [f"{tag}.{n}" for n in lyr.param_names()]
        return names

    def config(self):
        return {"c_in": self.c_in, "c_out": self.c_out, "stride": self.stride}

    def forward(self, x):
        z1, c1 = self.conv1.forward(x)
        a1, cr1 = self.relu.forward(z1)
        z2, c2 = self.conv2.forward(a1)
        if self.proj is not None:
            sc, cp = self.proj.forward(x)
        else:
            sc, cp = x, None
        s = z2 + sc
        y, cr2 = self.relu.forward(s)
        return y, (c1, cr1, c2, cp, cr2)

    def backward(self, cache, dy):
        c1, cr1, c2, cp, cr2 = cache
        ds, _ = self.relu.backward(cr2, dy)
        da1, g2 = self.conv2.backward(c2, ds)
        dz1, _ = self.relu.backward(cr1, da1)
        dx, g1 = self.conv1.backward(c1, dz1)
        if self.proj is not None:
            dxp, gp = self.proj.backward(cp, ds)
            dx = dx + dxp
            return dx, g1 + g2 + gp
        dx = dx + ds
        return dx, g1 + g2


LAYER_KINDS = {cls.kind: cls for cls in (Dense, ReLU, Tanh, Conv2D, MaxPool2D,
                                         GlobalAvgPool, ResidualBlock)}
