"""Adam optimization with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import Network


class TrainingError(RuntimeError):
    """Raised when training produces non-finite gradients or losses."""


@dataclass
class AdamState:
    lr: float = 4e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0  # decoupled decay, applied after the Adam update
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_network(cls, net: Network, lr: float = 4e-5, beta1: float = 0.9,
                    beta2: float = 0.999, eps: float = 1e-8,
                    weight_decay: float = 0.0) -> "AdamState":
        params = net.parameters()
        return cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                   weight_decay=weight_decay, step=0,
                   m=[np.zeros_like(p, dtype=np.float64) for p in params],
                   v=[np.zeros_like(p, dtype=np.float64) for p in params])


def adam_step(net: Network, grads: list[np.ndarray], state: AdamState):
    """One bias-corrected Adam update; parameters are updated in place and the
    (network, state) pair is returned with the step counter advanced."""
    params = net.parameters()
    if len(grads) != len(params) or len(state.m) != len(params):
        raise ValueError("gradient/state arrays do not match network parameters")
    names = None
    for i, g in enumerate(grads):
        if not np.isfinite(g).all():
            names = names or net.parameter_names()
            raise TrainingError(f"non-finite gradient in {names[i]}")

    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g64 = g.astype(np.float64, copy=False)
        m *= b1
        m += (1.0 - b1) * g64
        v *= b2
        v += (1.0 - b2) * g64 * g64
        update = (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
        p -= update
        if state.weight_decay:
            p -= (state.lr * state.weight_decay) * p
    return net, state
