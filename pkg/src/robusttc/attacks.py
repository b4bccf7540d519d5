"""White-box l-infinity attacks restricted to payload bytes, and the epsilon sweep."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from robusttc.errors import EmptySplit, ShapeMismatch
from robusttc.tensornn.model import Model, input_gradient, predict

DEFAULT_GRID = (0.01, 0.03, 0.05, 0.07, 0.10, 0.15, 0.20)
KINDS = ("FGSM", "PGD")


@dataclass(frozen=True)
class AttackConfig:
    kind: str = "PGD"
    eps: float = 0.1
    alpha: float | None = None
    iters: int = 10
    respect_mask: bool = True
    random_start: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"attack kind must be one of {KINDS}")
        if self.eps < 0:
            raise ValueError("eps must be >= 0")
        if self.kind == "PGD" and (self.step_size <= 0 and self.eps > 0 or self.iters < 1):
            raise ValueError("PGD needs alpha > 0 and iters >= 1")

    @property
    def step_size(self) -> float:
        return self.eps / 10 if self.alpha is None else self.alpha


def _prepare(model: Model, x, mask):
    x = np.asarray(x, dtype=model.dtype)
    if mask is None:
        return x, np.ones_like(x)
    mask = np.asarray(mask, dtype=model.dtype)
    if mask.shape != x.shape:
        raise ShapeMismatch(f"mask {mask.shape} does not match batch {x.shape}")
    return x, mask


def masked_gradient(model: Model, x, labels, mask) -> np.ndarray:
    """Input gradient with non-perturbable positions zeroed."""
    x, mask = _prepare(model, x, mask)
    return input_gradient(model, x, labels) * mask


def fgsm(model: Model, x, labels, eps: float, mask=None) -> np.ndarray:
    x, mask = _prepare(model, x, mask)
    if eps == 0:
        return x.copy()
    step = model.dtype.type(eps) * np.sign(masked_gradient(model, x, labels, mask))
    return np.clip(x + step, 0, 1)


def pgd(model: Model, x, labels, cfg: AttackConfig, mask=None, rng=None) -> np.ndarray:
    """Iterated signed steps: step, box clip, ball projection.

    Starts from the clean point unless ``cfg.random_start``, in which case the
    perturbable bytes first get uniform noise in [-eps, eps] drawn from ``rng``.
    """
    x, mask = _prepare(model, x, mask)
    if not cfg.respect_mask:
        mask = np.ones_like(x)
    eps = model.dtype.type(cfg.eps)
    alpha = model.dtype.type(cfg.step_size)
    lo, hi = x - eps, x + eps
    adv = x.copy()
    if cfg.eps == 0:
        return adv
    if cfg.random_start:
        rng = np.random.default_rng(0) if rng is None else rng
        noise = rng.uniform(-cfg.eps, cfg.eps, x.shape).astype(x.dtype)
        adv = np.clip(np.clip(x + noise * mask, 0, 1), lo, hi)
    for _ in range(cfg.iters):
        g = masked_gradient(model, adv, labels, mask)
        adv = np.clip(np.clip(adv + alpha * np.sign(g), 0, 1), lo, hi)
    # Belt and braces: positions outside the mask stay bit-identical.
    return np.where(mask > 0, adv, x)


def attack(model: Model, x, labels, cfg: AttackConfig, mask=None, rng=None) -> np.ndarray:
    if not cfg.respect_mask:
        mask = None
    if cfg.kind == "FGSM":
        return fgsm(model, x, labels, cfg.eps, mask)
    return pgd(model, x, labels, cfg, mask, rng)


def attack_batched(model: Model, x, labels, cfg: AttackConfig, mask=None, batch_size: int = 512,
                   rng=None):
    out = []
    for i in range(0, len(x), batch_size):
        m = None if mask is None else mask[i:i + batch_size]
        out.append(attack(model, x[i:i + batch_size], labels[i:i + batch_size], cfg, m, rng))
    return np.concatenate(out) if out else np.asarray(x, model.dtype)


@dataclass
class RobustnessReport:
    """Accuracy per attack kind over an epsilon grid (fractions in [0, 1])."""

    grid: list[float]
    rows: dict[str, list[float]]
    clean: float
    model_name: str = "model"
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "RobustnessReport":
        return cls([float(e) for e in d["grid"]], {k: [float(v) for v in vs] for k, vs in d["rows"].items()},
                   float(d["clean"]), d.get("model_name", "model"), d.get("metadata", {}))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RobustnessReport":
        return cls.from_dict(json.loads(text))

    def accuracy(self, kind: str, eps: float) -> float:
        return self.rows[kind][self.grid.index(eps)]

    def csv_rows(self) -> list[list[str]]:
        return [[kind, self.model_name, *(f"{100 * v:.2f}" for v in vals)] for kind, vals in self.rows.items()]


def reports_to_csv(reports: list[RobustnessReport]) -> str:
    """Table layout: one row per (attack, model), one column per epsilon."""
    grid = reports[0].grid if reports else list(DEFAULT_GRID)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["attack", "model", *(f"{e:.2f}" for e in grid)])
    rows = [r for rep in reports for r in rep.csv_rows()]
    rows.sort(key=lambda r: KINDS.index(r[0]) if r[0] in KINDS else len(KINDS))
    w.writerows(rows)
    return buf.getvalue()


def sweep(model: Model, dataset, grid=DEFAULT_GRID, pgd_iters: int = 10, seed: int = 0,
          split: str = "test", batch_size: int = 512, model_name: str = "model",
          random_start: bool = False) -> RobustnessReport:
    """Accuracy under FGSM and PGD (alpha = eps / 10) for every epsilon in ``grid``.

    ``seed`` only matters for PGD with ``random_start``.
    """
    x, y, mask = dataset.arrays(split, model.dtype)
    if len(y) == 0:
        raise EmptySplit(f"split {split!r} is empty")
    grid = sorted(float(e) for e in grid)
    clean = float(np.mean(predict(model, x) == y))
    rows = {kind: [] for kind in KINDS}
    rng = np.random.default_rng(seed)
    for eps in grid:
        for kind in KINDS:
            cfg = AttackConfig(kind, eps, eps / 10, pgd_iters, random_start=random_start)
            adv = attack_batched(model, x, y, cfg, mask, batch_size, rng)
            rows[kind].append(float(np.mean(predict(model, adv) == y)))
    meta = {"model_hash": model.digest()[:16], "dataset_hash": dataset.digest()[:16],
            "seed": seed, "split": split, "pgd_iters": pgd_iters, "n_samples": int(len(y)),
            "pgd_alpha": "eps/10", "random_start": random_start}
    return RobustnessReport(grid, rows, clean, model_name, meta)
