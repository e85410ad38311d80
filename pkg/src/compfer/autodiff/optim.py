"""Adam optimizer."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from compfer.autodiff.tensor import ParamStore
from compfer.errors import ConfigError


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: ParamStore, grads: dict, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8, state: AdamState | None = None) -> AdamState:
    """One bias-corrected Adam update, in place. Frozen parameters are skipped."""
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    if not (0 <= beta1 < 1 and 0 <= beta2 < 1) or eps <= 0:
        raise ConfigError("invalid Adam betas/eps")
    state = state if state is not None else AdamState()
    state.step += 1
    c1 = 1 - beta1 ** state.step
    c2 = 1 - beta2 ** state.step
    for name, g in grads.items():
        t = params[name]
        if not t.requires_grad:
            continue
        g = np.asarray(g, dtype=t.dtype)
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros(t.shape, dtype=t.dtype)
            state.v[name] = np.zeros(t.shape, dtype=t.dtype)
        v = state.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * (g * g)
        denom = np.sqrt(v / t.dtype.type(c2))
        denom += t.dtype.type(eps)
        t.data = t.data - t.dtype.type(lr / c1) * m / denom
    return state


class Adam:
    def __init__(self, params: ParamStore, lr: float = 1e-3, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {lr}")
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.state = AdamState()

    def step(self, grads: dict) -> None:
        adam_step(self.params, grads, self.lr, self.beta1, self.beta2, self.eps, self.state)
