"""Fully connected networks with hand-written backpropagation."""
from __future__ import annotations

import numpy as np

NEGATIVE_SLOPE = 0.01


class ShapeError(ValueError):
    pass


def leaky_relu(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, NEGATIVE_SLOPE * z)


class Mlp:
    """Affine layers joined by Leaky ReLU; the last layer is linear.

    Parameters live in ``self.params`` as ``[W0, b0, W1, b1, ...]`` with
    ``W`` of shape (fan_in, fan_out).  ``forward`` returns the activations
    needed by ``backward`` instead of storing them, so one network can be
    evaluated several times before gradients are taken.
    """

    def __init__(self, sizes, rng: np.random.Generator | None = None, zero_last: bool = False):
        sizes = [int(s) for s in sizes]
        if len(sizes) < 2 or min(sizes) < 1:
            raise ShapeError(f"invalid layer sizes {sizes}")
        self.sizes = sizes
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: list[np.ndarray] = []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            bound = 1.0 / np.sqrt(fan_in)
            self.params.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            self.params.append(rng.uniform(-bound, bound, fan_out))
        if zero_last:
            self.params[-2][:] = 0.0
            self.params[-1][:] = 0.0

    @property
    def n_layers(self) -> int:
        return len(self.params) // 2

    def forward(self, x: np.ndarray):
        x = np.asarray(x, dtype=self.params[0].dtype)
        if x.shape[-1] != self.sizes[0]:
            raise ShapeError(f"expected input width {self.sizes[0]}, got {x.shape[-1]}")
        acts = [x]
        pre = []
        h = x
        for i in range(self.n_layers):
            z = h @ self.params[2 * i] + self.params[2 * i + 1]
            pre.append(z)
            h = leaky_relu(z) if i < self.n_layers - 1 else z
            acts.append(h)
        return h, (acts, pre)

    def __call__(self, x):
        return self.forward(x)[0]

    def backward(self, grad_out: np.ndarray, cache, grads: list[np.ndarray]) -> np.ndarray:
        """Accumulate parameter gradients into ``grads``; return d(loss)/d(input)."""
        acts, pre = cache
        g = grad_out
        for i in reversed(range(self.n_layers)):
            if i < self.n_layers - 1:
                g = np.where(pre[i] > 0, g, NEGATIVE_SLOPE * g)
            grads[2 * i] += acts[i].reshape(-1, acts[i].shape[-1]).T @ g.reshape(-1, g.shape[-1])
            grads[2 * i + 1] += g.reshape(-1, g.shape[-1]).sum(axis=0)
            g = g @ self.params[2 * i].T
        return g

    def astype(self, dtype) -> None:
        self.params = [p.astype(dtype) for p in self.params]

    def zero_grads(self) -> list[np.ndarray]:
        return [np.zeros_like(p) for p in self.params]
