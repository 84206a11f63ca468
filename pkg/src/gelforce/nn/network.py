"""Network container: one or two sequential branches feeding a scalar head.

Branch outputs are reduced to feature vectors either at marked tap points
(global-average-pooled and concatenated, preserving low-level features for
the head) or, when a branch has no taps, from its final output. A network
without a head simply returns its single branch's output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import GlobalAvgPool, Layer

_gap = GlobalAvgPool()


@dataclass
class Branch:
    layers: list[Layer]
    taps: tuple[int, ...] = ()  # layer indices whose pooled outputs feed the head

    def __post_init__(self):
        bad = [t for t in self.taps if not (0 <= t < len(self.layers))]
        if bad:
            raise ValueError(f"tap indices {bad} out of range for {len(self.layers)} layers")


@dataclass
class Network:
    branches: list[Branch]
    head: list[Layer] = field(default_factory=list)

    @property
    def n_inputs(self) -> int:
        return len(self.branches)

    def parameters(self) -> list[np.ndarray]:
        out = []
        for br in self.branches:
            for lyr in br.layers:
                out.extend(lyr.params)
        for lyr in self.head:
            out.extend(lyr.params)
        return out

    def parameter_names(self) -> list[str]:
        out = []
        for bi, br in enumerate(self.branches):
            for li, lyr in enumerate(br.layers):
                out.extend(f"branch{bi}/layer{li}/{lyr.kind}/{n}" for n in lyr.param_names())
        for li, lyr in enumerate(self.head):
            out.extend(f"head/layer{li}/{lyr.kind}/{n}" for n in lyr.param_names())
        return out

    def set_parameters(self, values: list[np.ndarray]) -> None:
        own = self.parameters()
        if len(own) != len(values):
            raise ValueError(f"expected {len(own)} parameter arrays, got {len(values)}")
        for dst, src in zip(own, values):
            if dst.shape != src.shape:
                raise ValueError(f"parameter shape mismatch: {dst.shape} vs {src.shape}")
            dst[...] = src.astype(dst.dtype)


def _as_inputs(batch) -> list[np.ndarray]:
    if isinstance(batch, (list, tuple)):
        return list(batch)
    return [batch]


def forward(net: Network, batch, tap_overrides: dict | None = None):
    """Run the network; returns (output, cache).

    `batch` is one array per branch (a bare array for single-branch nets).
    `tap_overrides` maps (branch_index, tap_index) -> array and substitutes
    pooled tap features; it exists so tests can ablate individual taps.
    """
    xs = _as_inputs(batch)
    if len(xs) != net.n_inputs:
        raise ValueError(f"network expects {net.n_inputs} input(s), got {len(xs)}")

    feats = []
    feat_meta = []  # (branch_idx, layer_idx, pooled_shape or None)
    branch_caches = []
    for bi, (br, x) in enumerate(zip(net.branches, xs)):
        caches = []
        for li, lyr in enumerate(br.layers):
            if x.ndim not in (2, 4):
                raise ValueError(f"branch {bi} layer {li}: unsupported input rank {x.ndim}")
            x, c = lyr.forward(x)
            caches.append(c)
            if li in br.taps:
                pooled, pc = _gap.forward(x)
                if tap_overrides and (bi, li) in tap_overrides:
                    pooled = tap_overrides[(bi, li)]
                feats.append(pooled)
                feat_meta.append((bi, li, pc))
        branch_caches.append(caches)
        if not br.taps and net.head:
            if x.ndim == 4:
                pooled, pc = _gap.forward(x)
                feats.append(pooled)
                feat_meta.append((bi, len(br.layers) - 1, pc))
            else:
                feats.append(x)
                feat_meta.append((bi, len(br.layers) - 1, None))
        if not net.head:
            out = x  # headless network: single branch, raw output

    if net.head:
        h = np.concatenate(feats, axis=1) if len(feats) > 1 else feats[0]
        widths = [f.shape[1] for f in feats]
        head_caches = []
        for lyr in net.head:
            h, c = lyr.forward(h)
            head_caches.append(c)
        out = h
        cache = (branch_caches, feat_meta, widths, head_caches, [x.shape for x in xs])
    else:
        cache = (branch_caches, feat_meta, None, None, [x.shape for x in xs])

    if not np.isfinite(out).all():
        raise FloatingPointError("network produced non-finite output")
    return out, cache


def backward(net: Network, cache, loss_grad: np.ndarray) -> list[np.ndarray]:
    """Gradients of the loss w.r.t. every parameter, in `parameters()` order."""
    branch_caches, feat_meta, widths, head_caches, _ = cache

    branch_grads: list[list] = []
    if net.head:
        d = loss_grad
        head_grads = []
        for lyr, c in zip(reversed(net.head), reversed(head_caches)):
            d, gs = lyr.backward(c, d)
            head_grads = gs + head_grads
        # split the concatenated feature gradient back per tap
        splits = np.split(d, np.cumsum(widths)[:-1], axis=1) if len(widths) > 1 else [d]
        # per-branch: map layer index -> feature gradient at that point
        tapgrad: dict[tuple[int, int], np.ndarray] = {}
        for (bi, li, pc), dfeat in zip(feat_meta, splits):
            if pc is not None:
                dfeat, _ = _gap.backward(pc, dfeat)
            tapgrad[(bi, li)] = dfeat
    else:
        tapgrad = {(0, len(net.branches[0].layers) - 1): loss_grad}
        head_grads = []

    for bi, br in enumerate(net.branches):
        caches = branch_caches[bi]
        d = None
        grads_rev = []
        for li in range(len(br.layers) - 1, -1, -1):
            inject = tapgrad.get((bi, li))
            if inject is not None:
                d = inject if d is None else d + inject
            if d is None:
                d = _zeros_like_output(caches[li], br.layers[li])
            d, gs = br.layers[li].backward(caches[li], d)
            grads_rev = gs + grads_rev
        branch_grads.append(grads_rev)

    flat = [g for gs in branch_grads for g in gs] + head_grads
    return flat


def _zeros_like_output(cache, layer):
    raise RuntimeError(
        f"no gradient reached layer of kind {layer.kind}; network wiring is broken")


def mse_loss(pred: np.ndarray, target: np.ndarray):
    """Mean squared error over every element; returns (loss, d loss/d pred)."""
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    diff = pred - target
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    grad = (2.0 / diff.size) * diff
    return loss, grad
