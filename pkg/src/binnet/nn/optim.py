"""Optimizers. Binary-conv latent weights are clamped to [-1, 1] after each step."""
from __future__ import annotations

import numpy as np

from .autograd import Parameter


def clamp_latents(params: list[Parameter]) -> None:
    for p in params:
        if p.role == "binary-conv weight":
            np.clip(p.data, -1.0, 1.0, out=p.data)


class Optimizer:
    def __init__(self, params: list[Parameter], lr: float):
        self.params = list(params)
        self.lr = lr
        self.t = 0

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is not None:
                self._update(i, p, p.grad)
        clamp_latents(self.params)

    def _update(self, i, p, g):
        raise NotImplementedError

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {}

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        pass


class Adam(Optimizer):
    """Adam without weight decay."""

    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        super().__init__(params, lr)
        self.betas = betas
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def _update(self, i, p, g):
        b1, b2 = self.betas
        m, v = self.m[i], self.v[i]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * (g * g)
        mhat = m / (1 - b1 ** self.t)
        vhat = v / (1 - b2 ** self.t)
        p.data -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.data.dtype, copy=False)

    def state_arrays(self):
        out = {"t": np.array([self.t], dtype=np.float64)}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            out[f"m.{i}"] = m
            out[f"v.{i}"] = v
        return out

    def load_state_arrays(self, arrays):
        self.t = int(arrays["t"][0])
        for i in range(len(self.params)):
            self.m[i][...] = arrays[f"m.{i}"]
            self.v[i][...] = arrays[f"v.{i}"]


class SGD(Optimizer):
    """Momentum SGD with L2 weight decay folded into the gradient."""

    def __init__(self, params, lr=0.1, momentum=0.9, weight_decay=1e-4):
        super().__init__(params, lr)
        self.momentum = momentum
        self.weight_decay = weight_decay
        self.buf = [np.zeros_like(p.data) for p in self.params]

    def _update(self, i, p, g):
        if self.weight_decay:
            g = g + self.weight_decay * p.data
        b = self.buf[i]
        b *= self.momentum
        b += g
        p.data -= (self.lr * b).astype(p.data.dtype, copy=False)

    def state_arrays(self):
        out = {"t": np.array([self.t], dtype=np.float64)}
        for i, b in enumerate(self.buf):
            out[f"buf.{i}"] = b
        return out

    def load_state_arrays(self, arrays):
        self.t = int(arrays["t"][0])
        for i in range(len(self.params)):
            self.buf[i][...] = arrays[f"buf.{i}"]


def adam_step(params, grads, lr, betas=(0.9, 0.999), eps=1e-8, state: Adam | None = None) -> Adam:
    """One functional Adam step; pass the returned optimizer back in to continue."""
    opt = state or Adam(params, lr, betas, eps)
    for p, g in zip(params, grads):
        p.grad = g
    opt.step()
    return opt


def sgd_momentum_step(params, grads, lr, momentum=0.9, weight_decay=0.0, state: SGD | None = None) -> SGD:
    opt = state or SGD(params, lr, momentum, weight_decay)
    for p, g in zip(params, grads):
        p.grad = g
    opt.step()
    return opt
