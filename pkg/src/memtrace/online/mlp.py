"""A small tanh MLP with hand-written reverse mode and an Adam optimiser."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NonFiniteError(FloatingPointError):
    """Raised when a forward or backward pass produces NaN or inf."""


def orthogonal(rng: np.random.Generator, shape: tuple[int, int], gain: float) -> np.ndarray:
    a = rng.standard_normal(shape)
    q, r = np.linalg.qr(a if shape[0] >= shape[1] else a.T)
    q = q * np.sign(np.diag(r))
    if shape[0] < shape[1]:
        q = q.T
    return gain * q[: shape[0], : shape[1]]


@dataclass
class MLP:
    """Fully connected net ``x -> tanh(x W1 + b1) -> tanh(. W2 + b2) -> . W3 + b3``."""

    params: list[np.ndarray]

    @classmethod
    def build(cls, sizes: list[int], rng: np.random.Generator, out_gain: float = 1.0) -> MLP:
        params = []
        for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            gain = out_gain if i == len(sizes) - 2 else np.sqrt(2.0)
            params += [orthogonal(rng, (a, b), gain), np.zeros(b)]
        return cls(params)

    @classmethod
    def zeros(cls, sizes: list[int]) -> MLP:
        params = []
        for a, b in zip(sizes[:-1], sizes[1:]):
            params += [np.zeros((a, b)), np.zeros(b)]
        return cls(params)

    @property
    def nlayers(self) -> int:
        return len(self.params) // 2

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        """Output and the per-layer inputs needed by :meth:`backward`."""
        cache = [x]
        h = x
        for i in range(self.nlayers):
            h = h @ self.params[2 * i] + self.params[2 * i + 1]
            if i < self.nlayers - 1:
                h = np.tanh(h)
                cache.append(h)
        if not np.all(np.isfinite(h)):
            raise NonFiniteError("non-finite network output")
        return h, cache

    def backward(self, cache: list[np.ndarray], dout: np.ndarray) -> list[np.ndarray]:
        """Gradients of ``sum(dout * output)`` with respect to every parameter."""
        grads: list[np.ndarray] = [None] * len(self.params)  # type: ignore[list-item]
        g = dout
        for i in reversed(range(self.nlayers)):
            inp = cache[i]
            grads[2 * i] = inp.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = (g @ self.params[2 * i].T) * (1.0 - inp**2)
        return grads


def mlp_forward_backward(net: MLP, x: np.ndarray, dout: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    out, cache = net.forward(x)
    return out, net.backward(cache, dout)


def global_norm(grads: list[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_by_global_norm(grads: list[np.ndarray], max_norm: float) -> tuple[list[np.ndarray], float]:
    """Rescale so the joint norm is at most ``max_norm``; returns the clipped grads and the original norm."""
    norm = global_norm(grads)
    if not np.isfinite(norm):
        raise NonFiniteError("non-finite gradient norm")
    if norm <= max_norm:
        return grads, norm
    scale = max_norm / (norm + 1e-12)
    return [g * scale for g in grads], norm


class Adam:
    def __init__(self, params: list[np.ndarray], beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-5):
        self.params = params
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads: list[np.ndarray], lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
