"""Adam and RMSprop with their standard defaults.

Both update in place and keep per-parameter state keyed by name, so a
parameter participates in at most one optimizer's state.
"""

from __future__ import annotations

import numpy as np

from ..errors import MissingGrads


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {n: np.zeros_like(t.values) for n, t in params.items()}
        self.v = {n: np.zeros_like(t.values) for n, t in params.items()}

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self.t
        bias2 = 1.0 - b2 ** self.t
        for name, t in self.params.items():
            if t.grad is None:
                raise MissingGrads(f"parameter {name!r} has no gradient")
            g = t.grad
            self.m[name] = b1 * self.m[name] + (1.0 - b1) * g
            self.v[name] = b2 * self.v[name] + (1.0 - b2) * g * g
            m_hat = self.m[name] / bias1
            v_hat = self.v[name] / bias2
            t.values -= (self.lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(t.values.dtype)


class RMSprop:
    def __init__(self, params, lr=1e-3, decay=0.9, eps=1e-8):
        self.params = params
        self.lr = lr
        self.decay = decay
        self.eps = eps
        self.v = {n: np.zeros_like(t.values) for n, t in params.items()}

    def step(self):
        for name, t in self.params.items():
            if t.grad is None:
                raise MissingGrads(f"parameter {name!r} has no gradient")
            g = t.grad
            self.v[name] = self.decay * self.v[name] + (1.0 - self.decay) * g * g
            t.values -= (self.lr * g / (np.sqrt(self.v[name]) + self.eps)).astype(t.values.dtype)


def make_optimizer(kind, params, lr=1e-3):
    if kind == "adam":
        return Adam(params, lr=lr)
    if kind == "rmsprop":
        return RMSprop(params, lr=lr)
    raise ValueError(f"unknown optimizer kind {kind!r}")
