"""Finite-difference verification of analytic gradients."""

from __future__ import annotations

import numpy as np

from .network import Network, backward, forward, mse_loss


def grad_check(net: Network, batch, target: np.ndarray, eps: float,
               max_per_array: int | None = None,
               rng: np.random.Generator | None = None) -> float:
    """Max relative error between analytic and central-difference gradients.

    Parameters must be 64-bit. For each parameter array either every entry
    or a seeded sample of `max_per_array` entries is perturbed by +-eps; the
    relative error is |analytic - fd| / max(|analytic|, |fd|, 1e-12).
    """
    if not (1e-7 <= eps <= 1e-3):
        raise ValueError(f"eps must lie in [1e-7, 1e-3], got {eps}")
    params = net.parameters()
    for p in params:
        if p.dtype != np.float64:
            raise ValueError("grad_check requires float64 parameters")

    out, cache = forward(net, batch)
    _, dout = mse_loss(out, target)
    grads = backward(net, cache, dout)

    def loss_at() -> float:
        o, _ = forward(net, batch)
        return mse_loss(o, target)[0]

    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for p, g in zip(params, grads):
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        n = flat_p.size
        if max_per_array is not None and n > max_per_array:
            idx = rng.choice(n, size=max_per_array, replace=False)
        else:
            idx = np.arange(n)
        for i in idx:
            orig = flat_p[i]
            flat_p[i] = orig + eps
            lp = loss_at()
            flat_p[i] = orig - eps
            lm = loss_at()
            flat_p[i] = orig
            fd = (lp - lm) / (2.0 * eps)
            a = float(flat_g[i])
            rel = abs(a - fd) / max(abs(a), abs(fd), 1e-12)
            worst = max(worst, rel)
    return worst
