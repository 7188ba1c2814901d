"""Adam with lazy row-sparse updates.

Gradients come as ``{name: (rows, values)}`` where ``rows`` indexes the first
axis of the parameter, or ``{name: dense_array}``.  Only touched rows have
their moments and step counters advanced, so parameters of entities absent
from a batch stay bit-identical.
"""
from __future__ import annotations

import numpy as np


class Adam:
    def __init__(self, params: dict, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8, clip: float | None = None):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.clip = clip
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.steps = {k: np.zeros(v.shape[0], dtype=np.int64) for k, v in params.items()}

    def step(self, grads: dict) -> None:
        for name, g in grads.items():
            if isinstance(g, tuple):
                rows, vals = g
            else:
                rows, vals = np.arange(g.shape[0]), g
            if len(rows) == 0:
                continue
            if self.clip is not None:
                vals = np.clip(vals, -self.clip, self.clip)
            p = self.params[name]
            self.steps[name][rows] += 1
            t = self.steps[name][rows].reshape((-1,) + (1,) * (p.ndim - 1))
            m = self.b1 * self.m[name][rows] + (1 - self.b1) * vals
            v = self.b2 * self.v[name][rows] + (1 - self.b2) * vals * vals
            self.m[name][rows] = m
            self.v[name][rows] = v
            mhat = m / (1 - self.b1**t)
            vhat = v / (1 - self.b2**t)
            p[rows] -= self.lr * mhat / (np.sqrt(vhat) + self.eps)
