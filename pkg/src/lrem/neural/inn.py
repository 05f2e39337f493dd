"""Invertible network built from affine coupling blocks and fixed permutations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mlp import Mlp, ShapeError

SCALE_CLAMP = 2.0


class NumericError(FloatingPointError):
    pass


def _check_finite(a: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(a)):
        raise NumericError(f"non-finite values in {what}")
    return a


class CouplingBlock:
    """Two-stage affine coupling.

    Forward::

        v1 = u1 * exp(s2(u2)) + t2(u2)
        v2 = u2 * exp(s1(v1)) + t1(v1)

    where each scale output is soft-clamped to ``alpha * tanh(s / alpha)``.
    """

    def __init__(self, dim: int, width: int = 100, hidden: int = 4,
                 rng: np.random.Generator | None = None, alpha: float = SCALE_CLAMP):
        if dim % 2:
            raise ShapeError("coupling blocks need an even channel count")
        self.dim = dim
        self.half = dim // 2
        self.alpha = float(alpha)
        rng = rng if rng is not None else np.random.default_rng(0)
        sizes = [self.half] + [width] * hidden + [self.half]
        self.s1, self.s2, self.t1, self.t2 = (Mlp(sizes, rng, zero_last=True) for _ in range(4))

    @property
    def subnets(self) -> tuple[Mlp, Mlp, Mlp, Mlp]:
        return self.s1, self.s2, self.t1, self.t2

    @property
    def params(self) -> list[np.ndarray]:
        return [p for net in self.subnets for p in net.params]

    def _scale(self, net: Mlp, x):
        raw, cache = net.forward(x)
        th = np.tanh(raw / self.alpha)
        return self.alpha * th, (cache, th)

    def _scale_back(self, net: Mlp, g, cache, grads):
        inner, th = cache
        return net.backward(g * (1.0 - th * th), inner, grads)

    def forward(self, u: np.ndarray):
        u1, u2 = u[:, :self.half], u[:, self.half:]
        a2, c_s2 = self._scale(self.s2, u2)
        b2, c_t2 = self.t2.forward(u2)
        e2 = np.exp(a2)
        v1 = u1 * e2 + b2
        a1, c_s1 = self._scale(self.s1, v1)
        b1, c_t1 = self.t1.forward(v1)
        e1 = np.exp(a1)
        v2 = u2 * e1 + b1
        v = _check_finite(np.concatenate([v1, v2], axis=1), "coupling forward")
        cache = (u1, u2, v1, e1, e2, c_s1, c_s2, c_t1, c_t2)
        return v, cache, a1.sum(axis=1) + a2.sum(axis=1)

    def inverse(self, v: np.ndarray):
        v1, v2 = v[:, :self.half], v[:, self.half:]
        a1, c_s1 = self._scale(self.s1, v1)
        b1, c_t1 = self.t1.forward(v1)
        e1 = np.exp(-a1)
        u2 = (v2 - b1) * e1
        a2, c_s2 = self._scale(self.s2, u2)
        b2, c_t2 = self.t2.forward(u2)
        e2 = np.exp(-a2)
        u1 = (v1 - b2) * e2
        u = _check_finite(np.concatenate([u1, u2], axis=1), "coupling inverse")
        return u, (u1, u2, e1, e2, c_s1, c_s2, c_t1, c_t2)

    def astype(self, dtype) -> None:
        for net in self.subnets:
            net.astype(dtype)

    def grads_template(self):
        return {id(n): n.zero_grads() for n in self.subnets}

    def backward(self, dv: np.ndarray, cache, grads) -> np.ndarray:
        u1, u2, v1, e1, e2, c_s1, c_s2, c_t1, c_t2 = cache
        dv1, dv2 = dv[:, :self.half], dv[:, self.half:]
        du2 = dv2 * e1
        dv1 = (dv1 + self._scale_back(self.s1, dv2 * u2 * e1, c_s1, grads[id(self.s1)])
               + self.t1.backward(dv2, c_t1, grads[id(self.t1)]))
        du1 = dv1 * e2
        du2 = (du2 + self._scale_back(self.s2, dv1 * u1 * e2, c_s2, grads[id(self.s2)])
               + self.t2.backward(dv1, c_t2, grads[id(self.t2)]))
        return np.concatenate([du1, du2], axis=1)

    def inverse_backward(self, du: np.ndarray, cache, grads) -> np.ndarray:
        u1, u2, e1, e2, c_s1, c_s2, c_t1, c_t2 = cache
        du1, du2 = du[:, :self.half], du[:, self.half:]
        dv1 = du1 * e2
        du2 = (du2 + self._scale_back(self.s2, -du1 * u1, c_s2, grads[id(self.s2)])
               + self.t2.backward(-du1 * e2, c_t2, grads[id(self.t2)]))
        dv2 = du2 * e1
        dv1 = (dv1 + self._scale_back(self.s1, -du2 * u2, c_s1, grads[id(self.s1)])
               + self.t1.backward(-du2 * e1, c_t1, grads[id(self.t1)]))
        return np.concatenate([dv1, dv2], axis=1)


@dataclass(frozen=True)
class IoLayout:
    """How input and output vectors are embedded in the network width.

    Inputs shorter than the width are zero padded; outputs shorter than the
    width are completed with latent channels.
    """
    n_in: int
    n_out: int

    @property
    def width(self) -> int:
        w = max(self.n_in, self.n_out)
        return w + (w % 2)

    @property
    def input_padding(self) -> int:
        return self.width - self.n_in

    @property
    def latent_size(self) -> int:
        return self.width - self.n_out

    def pad_input(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        return np.concatenate([x, np.zeros((len(x), self.input_padding), dtype=x.dtype)], axis=1)

    def join_output(self, y: np.ndarray, z: np.ndarray | None = None) -> np.ndarray:
        y = np.atleast_2d(y)
        if z is None:
            z = np.zeros((len(y), self.latent_size), dtype=y.dtype)
        return np.concatenate([y, np.atleast_2d(z).reshape(len(y), -1)], axis=1)

    def split_output(self, v: np.ndarray):
        return v[:, :self.n_out], v[:, self.n_out:]


class InnModel:
    """Stack of ``n_blocks`` coupling blocks, each preceded by a fixed permutation."""

    kind = "inn"

    def __init__(self, n_in: int = 4, n_out: int = 4, n_blocks: int = 10, width: int = 100,
                 hidden: int = 4, alpha: float = SCALE_CLAMP, seed: int = 0):
        self.layout = IoLayout(n_in, n_out)
        self.seed = int(seed)
        self.width, self.hidden, self.alpha = int(width), int(hidden), float(alpha)
        rng = np.random.default_rng(seed)
        d = self.layout.width
        self.perms = [rng.permutation(d) for _ in range(n_blocks)]
        self.blocks = [CouplingBlock(d, width, hidden, rng, alpha) for _ in range(n_blocks)]
        self.norm = None  # NormStats, attached after training

    @property
    def params(self) -> list[np.ndarray]:
        return [p for b in self.blocks for p in b.params]

    def astype(self, dtype) -> "InnModel":
        for b in self.blocks:
            b.astype(dtype)
        return self

    def _subnets(self):
        return [n for b in self.blocks for n in b.subnets]

    def _chain(self, h):
        caches = []
        for perm, block in zip(self.perms, self.blocks):
            h, cache, _ = block.forward(h[:, perm])
            caches.append(cache)
        return h, caches

    def forward_raw(self, x: np.ndarray) -> np.ndarray:
        return self._chain(self.layout.pad_input(np.asarray(x, dtype=float)))[0]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Design -> target prediction (latent channels dropped)."""
        return self.layout.split_output(self.forward_raw(x))[0]

    def log_det_jacobian(self, x: np.ndarray) -> np.ndarray:
        h = self.layout.pad_input(np.asarray(x, dtype=float))
        total = np.zeros(len(h))
        for perm, block in zip(self.perms, self.blocks):
            h, _, ld = block.forward(h[:, perm])
            total += ld
        return total

    def _inverse_chain(self, h):
        caches = []
        for perm, block in zip(reversed(self.perms), reversed(self.blocks)):
            h, cache = block.inverse(h)
            caches.append(cache)
            inv = np.empty_like(perm)
            inv[perm] = np.arange(len(perm))
            h = h[:, inv]
        return h, caches

    def inverse_raw(self, v: np.ndarray) -> np.ndarray:
        return self._inverse_chain(np.atleast_2d(np.asarray(v, dtype=float)))[0]

    def inverse(self, y: np.ndarray, z: np.ndarray | None = None) -> np.ndarray:
        """Target (plus optional latent sample) -> design."""
        h = self.inverse_raw(self.layout.join_output(np.asarray(y, dtype=float), z))
        return h[:, :self.layout.n_in]

    def __call__(self, x):
        return self.forward(x)

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray, bidirectional: bool = False):
        """Mean absolute error of the forward map (plus inverse reconstruction)."""
        grads = {}
        for b in self.blocks:
            grads.update(b.grads_template())
        h = self.layout.pad_input(x)
        out, caches = self._chain(h)
        pred = out[:, :self.layout.n_out]
        loss = np.mean(np.abs(pred - y))
        g = np.zeros_like(out)
        g[:, :self.layout.n_out] = np.sign(pred - y) / pred.size
        for perm, block, cache in zip(reversed(self.perms), reversed(self.blocks), reversed(caches)):
            g = block.backward(g, cache, grads)
            inv = np.empty_like(perm)
            inv[perm] = np.arange(len(perm))
            g = g[:, inv]
        if bidirectional:
            v = self.layout.join_output(y)
            rec, icaches = self._inverse_chain(v)
            xr = rec[:, :self.layout.n_in]
            loss += np.mean(np.abs(xr - x))
            g = np.zeros_like(rec)
            g[:, :self.layout.n_in] = np.sign(xr - x) / xr.size
            for perm, block, cache in zip(self.perms, self.blocks, reversed(icaches)):
                g = g[:, perm]  # adjoint of the inverse permutation gather
                g = block.inverse_backward(g, cache, grads)
        flat = [gp for n in self._subnets() for gp in grads[id(n)]]
        return float(loss), flat


class DnnModel:
    """Plain feed-forward surrogate: 4 -> 7 x 150 -> 4."""

    kind = "dnn"

    def __init__(self, n_in: int = 4, n_out: int = 4, width: int = 150, hidden: int = 7,
                 seed: int = 0):
        self.seed = int(seed)
        self.width, self.hidden = int(width), int(hidden)
        self.net = Mlp([n_in] + [width] * hidden + [n_out], np.random.default_rng(seed))
        self.norm = None

    @property
    def params(self) -> list[np.ndarray]:
        return self.net.params

    def astype(self, dtype) -> "DnnModel":
        self.net.astype(dtype)
        return self

    def forward(self, x: np.ndarray) -> np.ndarray:
        return self.net(np.atleast_2d(np.asarray(x, dtype=float)))

    __call__ = forward

    def loss_and_grads(self, x: np.ndarray, y: np.ndarray, bidirectional: bool = False):
        pred, cache = self.net.forward(x)
        loss = np.mean(np.abs(pred - y))
        grads = self.net.zero_grads()
        self.net.backward(np.sign(pred - y) / pred.size, cache, grads)
        return float(loss), grads
