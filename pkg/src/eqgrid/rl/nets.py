"""Small dense tanh networks with hand-written backprop, and Adam."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Dense:
    """Fully connected tanh network; the last layer is linear.

    ``weights[k]`` has shape (fan_in, fan_out) so a batch ``x`` of shape
    (n, fan_in) maps to ``x @ W + b``.
    """

    weights: list
    biases: list

    @classmethod
    def init(cls, sizes, rng: np.random.Generator, out_scale: float = 0.01) -> "Dense":
        ws, bs = [], []
        for k, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
            scale = np.sqrt(1.0 / a)
            if k == len(sizes) - 2:
                scale *= out_scale
            ws.append(rng.normal(0.0, scale, size=(a, b)))
            bs.append(np.zeros(b))
        return cls(ws, bs)

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list]:
        """Returns the output and the list of layer inputs needed for backprop."""
        h = np.atleast_2d(np.asarray(x, dtype=float))
        acts = [h]
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w + b
            if k < last:
                h = np.tanh(h)
            acts.append(h)
        return h, acts

    def __call__(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, acts: list, grad_out: np.ndarray) -> "Dense":
        """Gradient of a scalar loss given dL/d(output); returned as a Dense of the same shape."""
        gws = [None] * len(self.weights)
        gbs = [None] * len(self.weights)
        g = grad_out
        for k in range(len(self.weights) - 1, -1, -1):
            gws[k] = acts[k].T @ g
            gbs[k] = g.sum(axis=0)
            if k:
                g = (g @ self.weights[k].T) * (1.0 - acts[k] ** 2)
        return Dense(gws, gbs)

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def with_flat(self, vec: np.ndarray) -> "Dense":
        vec = np.asarray(vec, dtype=float)
        ws, bs, pos = [], [], 0
        for w, b in zip(self.weights, self.biases):
            ws.append(vec[pos:pos + w.size].reshape(w.shape))
            pos += w.size
            bs.append(vec[pos:pos + b.size].copy())
            pos += b.size
        if pos != vec.size:
            raise ValueError(f"parameter vector has {vec.size} entries, network needs {pos}")
        return Dense(ws, bs)

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def copy(self) -> "Dense":
        return Dense([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class PolicyParams:
    actor: Dense  # state -> action logits
    critic: Dense  # state -> value

    @classmethod
    def init(cls, rng: np.random.Generator, n_state: int = 4, hidden=(64, 64), n_actions: int = 3) -> "PolicyParams":
        actor = Dense.init((n_state, *hidden, n_actions), rng, out_scale=0.01)
        critic = Dense.init((n_state, *hidden, 1), rng, out_scale=1.0)
        return cls(actor, critic)

    def flat(self) -> np.ndarray:
        return np.concatenate([self.actor.flat(), self.critic.flat()])

    def with_flat(self, vec: np.ndarray) -> "PolicyParams":
        na = self.actor.n_params
        return PolicyParams(self.actor.with_flat(vec[:na]), self.critic.with_flat(vec[na:]))

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.actor.copy(), self.critic.copy())

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.flat())))


class Adam:
    def __init__(self, n: int, lr: float = 3e-4, b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, x: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad ** 2
        m_hat = self.m / (1 - self.b1 ** self.t)
        v_hat = self.v / (1 - self.b2 ** self.t)
        return x - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
