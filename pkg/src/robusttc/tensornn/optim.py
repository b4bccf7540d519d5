"""Adam with bias correction (Keras defaults: beta1=0.9, beta2=0.999, eps=1e-7)."""

from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-7):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float) -> None:
        """Update ``params`` in place from ``grads`` (one step)."""
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for name, g in grads.items():
            p = params[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            m_hat = m / p.dtype.type(c1)
            v_hat = v / p.dtype.type(c2)
            p -= p.dtype.type(lr) * m_hat / (np.sqrt(v_hat) + p.dtype.type(self.eps))


def adam_step(state: Adam, params, grads, lr: float):
    state.step(params, grads, lr)
    return params
