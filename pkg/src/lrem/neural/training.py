"""Mini-batch Adam training on the L1 loss, and per-sample error metrics."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 2000
    batch_size: int = 128
    seed: int = 0
    val_fraction: float = 0.1
    patience: int = 200
    bidirectional: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        if not (self.learning_rate > 0 and self.epochs > 0 and self.batch_size > 0):
            raise ValueError("learning rate, epochs and batch size must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1 and self.eps > 0):
            raise ValueError("invalid Adam coefficients")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("val_fraction must be in [0, 1)")


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, grads):
        self.t += 1
        c1 = 1 - self.beta1 ** self.t
        c2 = 1 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


@dataclass
class TrainResult:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("epoch,train_loss,val_loss\n")
            for i, tr in enumerate(self.train_loss):
                va = self.val_loss[i] if i < len(self.val_loss) else float("nan")
                fh.write(f"{i + 1},{tr!r},{va!r}\n")


def train(model, X: np.ndarray, Y: np.ndarray, cfg: TrainConfig | None = None,
          progress_every: int = 0) -> TrainResult:
    """Fit ``model`` in place; parameters of the best validation epoch are kept.

    Optimization runs in ``cfg.dtype``; the model is returned in float64.
    """
    cfg = cfg or TrainConfig()
    model.astype(cfg.dtype)
    X = np.asarray(X, dtype=cfg.dtype)
    Y = np.asarray(Y, dtype=cfg.dtype)
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(X))
    n_val = int(round(cfg.val_fraction * len(X)))
    val_idx, tr_idx = order[:n_val], order[n_val:]
    Xtr, Ytr = X[tr_idx], Y[tr_idx]
    Xva, Yva = X[val_idx], Y[val_idx]

    params = model.params
    opt = Adam(params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    result = TrainResult()
    best = np.inf
    best_params = [p.copy() for p in params]
    since_best = 0
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(Xtr))
        total = 0.0
        for start in range(0, len(Xtr), cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            loss, grads = model.loss_and_grads(Xtr[idx], Ytr[idx], cfg.bidirectional)
            if not np.isfinite(loss):
                raise TrainingError(f"loss became non-finite at epoch {epoch + 1}")
            opt.step(grads)
            total += loss * len(idx)
        result.train_loss.append(total / len(Xtr))
        if n_val:
            val = evaluation_loss(model, Xva, Yva, cfg.bidirectional)
            if not np.isfinite(val):
                raise TrainingError(f"validation loss became non-finite at epoch {epoch + 1}")
            result.val_loss.append(val)
        else:
            val = result.train_loss[-1]
        if val < best:
            best, since_best, result.best_epoch = val, 0, epoch + 1
            best_params = [p.copy() for p in params]
        else:
            since_best += 1
        if progress_every and (epoch + 1) % progress_every == 0:
            log.info("epoch %d train %.5f val %.5f", epoch + 1, result.train_loss[-1], val)
        if n_val and since_best >= cfg.patience:
            result.stopped_early = True
            break
    for p, b in zip(params, best_params):
        p[...] = b
    model.astype(np.float64)
    return result


def evaluation_loss(model, X, Y, bidirectional=False) -> float:
    loss = float(np.mean(np.abs(model.forward(X) - Y)))
    if bidirectional and hasattr(model, "inverse"):
        loss += float(np.mean(np.abs(model.inverse(Y) - X)))
    return loss


def rmse_forward(model, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Per-sample root mean squared error of forward predictions."""
    return np.sqrt(np.mean((model.forward(X) - Y) ** 2, axis=1))


def rmse_inverse(model, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Per-sample root mean squared error of designs recovered from targets."""
    return np.sqrt(np.mean((model.inverse(Y) - X) ** 2, axis=1))
