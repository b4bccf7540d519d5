"""Mini-batch training with plateau LR decay, early stopping and best-epoch restore."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from robusttc.errors import EmptySplit
from robusttc.tensornn.model import Model, loss_and_grads, predict, update_bn_stats
from robusttc.tensornn.optim import Adam

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    max_epochs: int = 30
    lr0: float = 0.004
    batch_size: int = 1024
    plateau_patience: int = 3
    plateau_decay: float = 0.5
    early_stop_patience: int = 6
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.plateau_decay < 1:
            raise ValueError("plateau_decay must lie in (0, 1)")
        if self.max_epochs < 1 or self.batch_size < 1:
            raise ValueError("max_epochs and batch_size must be >= 1")

    def to_dict(self):
        return asdict(self)


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    val_accuracy: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int = -1

    @property
    def best_val_accuracy(self) -> float:
        return self.val_accuracy[self.best_epoch] if self.val_accuracy else float("nan")

    def __len__(self):
        return len(self.val_accuracy)

    def to_dict(self):
        return asdict(self)


def batches(order: np.ndarray, batch_size: int):
    """Yield index chunks lazily; the epoch is never materialized."""
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


def accuracy(model: Model, x: np.ndarray, y: np.ndarray, batch_size: int = 1024) -> float:
    if len(y) == 0:
        raise EmptySplit("cannot compute accuracy on an empty set")
    return float(np.mean(predict(model, x, batch_size) == y))


def evaluate(model: Model, ds, split: str = "test", batch_size: int = 1024) -> float:
    x, y, _ = ds.arrays(split, model.dtype)
    return accuracy(model, x, y, batch_size)


BatchFn = Callable[[Model, np.ndarray, np.ndarray, np.ndarray, np.random.Generator], np.ndarray]


def fit(model: Model, x_train, y_train, cfg: TrainConfig, *, val_fn: Callable[[Model], float],
        mask_train=None, batch_fn: BatchFn | None = None) -> tuple[Model, History]:
    """Generic epoch loop.

    ``val_fn`` scores the model after each epoch (higher is better) and drives
    both the plateau decay and early stopping. ``batch_fn(model, xb, yb, mb,
    rng)`` may rewrite each batch before the step (adversarial mixing).
    """
    if len(y_train) == 0:
        raise EmptySplit("training split is empty")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam()
    hist = History()
    lr = cfg.lr0
    best = -np.inf
    best_params = None
    stale = plateau = 0
    for epoch in range(cfg.max_epochs):
        total, seen = 0.0, 0
        for idx in batches(rng.permutation(len(y_train)), cfg.batch_size):
            xb, yb = x_train[idx], y_train[idx]
            if batch_fn is not None:
                mb = None if mask_train is None else mask_train[idx]
                xb = batch_fn(model, xb, yb, mb, rng)
            loss, grads, tape = loss_and_grads(model, xb, yb, rng, return_cache=True)
            update_bn_stats(model, tape)
            opt.step(model.params, grads, lr)
            total += float(loss) * len(idx)
            seen += len(idx)
        score = float(val_fn(model))
        hist.train_loss.append(total / seen)
        hist.val_accuracy.append(score)
        hist.lr.append(lr)
        log.info("epoch %d loss %.4f val %.4f lr %.2e", epoch, total / seen, score, lr)
        if score > best:
            best, hist.best_epoch = score, epoch
            best_params = {k: v.copy() for k, v in model.params.items()}
            stale = plateau = 0
        else:
            stale += 1
            plateau += 1
            if plateau >= cfg.plateau_patience:
                lr *= cfg.plateau_decay
                plateau = 0
            if stale >= cfg.early_stop_patience:
                break
    model.params = best_params
    model.mode = "eval"
    return model, hist


def train(model: Model, ds, cfg: TrainConfig | None = None) -> tuple[Model, History]:
    """Train on the ``train`` split, selecting by ``val`` accuracy."""
    cfg = cfg or TrainConfig()
    x_tr, y_tr, _ = ds.arrays("train", model.dtype)
    x_val, y_val, _ = ds.arrays("val", model.dtype)
    model.mode = "train"
    return fit(model, x_tr, y_tr, cfg, val_fn=lambda m: accuracy(m, x_val, y_val, cfg.batch_size))
