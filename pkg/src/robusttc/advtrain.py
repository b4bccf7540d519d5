"""Adversarial fine-tuning on mini-batches that mix clean and FGSM samples.

The loss of a step is the mean cross-entropy over the mixed batch, i.e. the
sum of clean and adversarial losses over the batch divided by its size.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass

import numpy as np

from robusttc.attacks import fgsm, RobustnessReport
from robusttc.errors import GridMismatch
from robusttc.tensornn.model import Model
from robusttc.tensornn.train import History, TrainConfig, accuracy, fit

log = logging.getLogger(__name__)

@dataclass
class AdvTrainConfig:
    epochs: int = 100
    fgsm_eps: float = 0.1
    adv_fraction: float = 0.5
    lr: float = 0.0004
    batch_size: int = 1024
    plateau_patience: int = 3
    plateau_decay: float = 0.5
    early_stop_patience: int = 6
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.adv_fraction < 1:
            raise ValueError("adv_fraction must lie in [0, 1)")
        if self.fgsm_eps < 0:
            raise ValueError("fgsm_eps must be >= 0")

    def train_config(self) -> TrainConfig:
        return TrainConfig(self.epochs, self.lr, self.batch_size, self.plateau_patience,
                           self.plateau_decay, self.early_stop_patience, self.seed)

    def to_dict(self):
        return asdict(self)


def n_adversarial(batch_size: int, adv_fraction: float) -> int:
    return int(np.floor(adv_fraction * batch_size + 0.5))


def mixed_batch(model: Model, x, labels, cfg: AdvTrainConfig, mask=None, rng=None):
    """Replace ``round(adv_fraction * B)`` rows of the batch with their FGSM versions.

    The gradient for the perturbation is taken in eval mode with the current
    weights. Returns ``(batch, labels, adv_index)``.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    x = np.asarray(x, dtype=model.dtype)
    k = n_adversarial(len(x), cfg.adv_fraction)
    pick = np.sort(rng.choice(len(x), size=k, replace=False)) if k else np.zeros(0, np.int64)
    out = x.copy()
    if k and cfg.fgsm_eps > 0:
        m = None if mask is None else np.asarray(mask)[pick]
        out[pick] = fgsm(model, x[pick], np.asarray(labels)[pick], cfg.fgsm_eps, m)
    return out, labels, pick


def _mixed_accuracy(model: Model, x, y, mask, cfg: AdvTrainConfig) -> float:
    """Validation score: clean accuracy and FGSM accuracy weighted like a batch."""
    clean = accuracy(model, x, y)
    if cfg.adv_fraction == 0 or cfg.fgsm_eps == 0:
        return clean
    adv = np.concatenate([fgsm(model, x[i:i + 512], y[i:i + 512], cfg.fgsm_eps, mask[i:i + 512])
                          for i in range(0, len(y), 512)])
    robust = accuracy(model, adv, y)
    return (1 - cfg.adv_fraction) * clean + cfg.adv_fraction * robust


def finetune(model: Model, dataset, cfg: AdvTrainConfig | None = None) -> tuple[Model, History]:
    """Continue training with freshly generated adversarial samples in every step."""
    cfg = cfg or AdvTrainConfig()
    x_tr, y_tr, m_tr = dataset.arrays("train", model.dtype)
    x_val, y_val, m_val = dataset.arrays("val", model.dtype)

    def batch_fn(m, xb, yb, mb, rng):
        return mixed_batch(m, xb, yb, cfg, mb, rng)[0]

    # BN moving statistics keep updating during fine-tuning (not frozen)
    log.info("fine-tuning with BN statistics trainable, eps=%g, adv_fraction=%g", cfg.fgsm_eps,
             cfg.adv_fraction)
    model.mode = "train"
    return fit(model, x_tr, y_tr, cfg.train_config(), mask_train=m_tr, batch_fn=batch_fn,
               val_fn=lambda m: _mixed_accuracy(m, x_val, y_val, m_val, cfg))


@dataclass
class DeltaTable:
    grid: list[float]
    rows: dict[str, list[float]]
    clean: float
    model_name: str = "model"

    def to_dict(self):
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def points(self, kind: str, eps: float) -> float:
        """Delta in percentage points, rounded to the table's 2 decimals."""
        return round(100 * self.rows[kind][self.grid.index(eps)], 2)


def compare(before: RobustnessReport, after: RobustnessReport) -> DeltaTable:
    if list(before.grid) != list(after.grid) or set(before.rows) != set(after.rows):
        raise GridMismatch("before/after reports use different epsilon grids or attacks")
    rows = {k: [a - b for a, b in zip(after.rows[k], before.rows[k])] for k in before.rows}
    return DeltaTable(list(before.grid), rows, after.clean - before.clean, before.model_name)


def deltas_to_csv(deltas: list[DeltaTable]) -> str:
    grid = deltas[0].grid if deltas else []
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["attack", "model", *(f"{e:.2f}" for e in grid), "clean"])
    for kind in ("FGSM", "PGD"):
        for d in deltas:
            if kind in d.rows:
                w.writerow([kind, d.model_name, *(f"{100 * v:+.2f}" for v in d.rows[kind]),
                            f"{100 * d.clean:+.2f}"])
    return buf.getvalue()
