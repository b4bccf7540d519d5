"""Evolutionary hardware-aware architecture search.

Each generation mutates the current parent until ``children`` feasible
offspring exist (infeasible ones are logged and never trained), trains them,
and promotes the best by validation accuracy. The global best across the
whole run, seed architecture included, is what :func:`search` returns.
"""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from robusttc.errors import InfeasibleSeed, MutationStarvation
from robusttc.hwcost import Thresholds, feasible
from robusttc.tensornn.model import Model, build
from robusttc.tensornn.spec import ArchSpec, BlockSpec, PoolSpec
from robusttc.tensornn.train import TrainConfig, train

log = logging.getLogger(__name__)

BLOCK_FIELDS = ("filters", "kernel", "stride", "padding", "pool", "dropout")
MUTATIONS = ("modify", "add", "remove")


@dataclass(frozen=True)
class SearchSpace:
    filters: tuple[int, int] = (16, 128)
    kernel: tuple[int, int] = (2, 7)
    stride: tuple[int, int] = (1, 7)
    dropout: tuple[float, float] = (0.1, 0.5)
    padding: tuple[str, ...] = ("valid", "same")
    pool_kinds: tuple[str, ...] = ("max", "avg")
    pool_sizes: tuple[int, ...] = (2, 3)
    max_blocks: int = 8

    def __post_init__(self):
        for lo, hi in (self.filters, self.kernel, self.stride, self.dropout):
            if lo > hi:
                raise ValueError("empty search-space range")
        if not (self.padding and self.pool_kinds and self.pool_sizes) or self.max_blocks < 1:
            raise ValueError("empty search-space choice set")


@dataclass
class SearchConfig:
    generations: int = 100
    children: int = 15
    thresholds: Thresholds = field(default_factory=Thresholds)
    train: TrainConfig = field(default_factory=TrainConfig)
    space: SearchSpace = field(default_factory=SearchSpace)
    seed: int = 0
    attempt_cap: int = 200
    workers: int = 1

    def __post_init__(self):
        if self.generations < 1 or self.children < 1:
            raise ValueError("generations and children must be >= 1")


def _int(rng, lo_hi) -> int:
    return int(rng.integers(lo_hi[0], lo_hi[1] + 1))


def _choice(rng, options):
    return options[int(rng.integers(len(options)))]


def _sample_field(name: str, space: SearchSpace, rng):
    if name in ("filters", "kernel", "stride"):
        return _int(rng, getattr(space, name))
    if name == "padding":
        return _choice(rng, space.padding)
    if name == "pool":
        if rng.random() < 0.5:
            return None
        return PoolSpec(_choice(rng, space.pool_kinds), int(_choice(rng, space.pool_sizes)))
    if name == "dropout":
        return float(rng.uniform(*space.dropout)) if rng.random() < 0.5 else 0.0
    raise KeyError(name)


def _mutable_fields(space: SearchSpace) -> tuple[str, ...]:
    """Fields with more than one possible value (modify must change something)."""
    fixed = {"filters": space.filters[0] == space.filters[1],
             "kernel": space.kernel[0] == space.kernel[1],
             "stride": space.stride[0] == space.stride[1],
             "padding": len(set(space.padding)) < 2,
             "pool": False,
             "dropout": space.dropout[1] <= 0.0}
    return tuple(name for name in BLOCK_FIELDS if not fixed[name])


def random_block(space: SearchSpace, rng: np.random.Generator) -> BlockSpec:
    return BlockSpec(**{name: _sample_field(name, space, rng) for name in BLOCK_FIELDS})


def mutate(parent: ArchSpec, space: SearchSpace, rng: np.random.Generator) -> ArchSpec:
    """Apply exactly one of modify / add / remove. Feasibility is not checked."""
    blocks = list(parent.blocks)
    while True:
        kind = _choice(rng, MUTATIONS)
        if kind == "remove" and len(blocks) <= 1:
            continue
        if kind == "add" and len(blocks) >= space.max_blocks:
            continue
        break
    if kind == "modify":
        i = int(rng.integers(len(blocks)))
        name = _choice(rng, _mutable_fields(space))
        current = getattr(blocks[i], name)
        value = current
        while value == current:
            value = _sample_field(name, space, rng)
        blocks[i] = replace(blocks[i], **{name: value})
    elif kind == "add":
        blocks.insert(int(rng.integers(len(blocks) + 1)), random_block(space, rng))
    else:
        del blocks[int(rng.integers(len(blocks)))]
    return parent.with_blocks(blocks)


def _rank_key(acc: float, params: int, spec_hash: str):
    return (-acc, params, spec_hash)


@dataclass
class Candidate:
    spec: ArchSpec
    generation: int
    index: int
    feasible: bool
    cost: dict
    val_accuracy: float | None = None
    best_epoch: int | None = None
    parent: str | None = None

    @property
    def trained(self) -> bool:
        return self.val_accuracy is not None

    def rank_key(self):
        return _rank_key(self.val_accuracy, self.cost["params"], self.spec.spec_hash())

    def to_record(self) -> dict:
        cost = {k: self.cost.get(k) for k in ("params", "flops", "max_tensor", "error")}
        return {"generation": self.generation, "index": self.index, "parent": self.parent,
                "spec_hash": self.spec.spec_hash(), "spec": self.spec.to_dict(),
                "feasible": self.feasible, "trained": self.trained, "cost": cost,
                "val_accuracy": self.val_accuracy, "best_epoch": self.best_epoch}


@dataclass
class GenerationRecord:
    generation: int
    parent: str
    children: list[Candidate]
    discarded: list[Candidate]
    best_so_far: float = float("nan")

    @property
    def trained(self) -> list[Candidate]:
        return [c for c in self.children if c.trained]


@dataclass
class SearchLog:
    seed_candidate: Candidate | None = None
    generations: list[GenerationRecord] = field(default_factory=list)

    def candidates(self) -> list[Candidate]:
        out = [self.seed_candidate] if self.seed_candidate else []
        for g in self.generations:
            out.extend(g.discarded)
            out.extend(g.children)
        return out

    def trained(self) -> list[Candidate]:
        return [c for c in self.candidates() if c.trained]

    def records(self) -> list[dict]:
        return [c.to_record() for c in sorted(self.candidates(), key=lambda c: (c.generation, c.index))]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.records())

    def digest(self) -> str:
        return hashlib.sha256(self.to_jsonl().encode()).hexdigest()

    def best_curve(self) -> list[float]:
        return [g.best_so_far for g in self.generations]


def _child_seed(seed: int, generation: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, generation, index]).generate_state(1)[0])


def _train_one(spec: ArchSpec, dataset, train_cfg: TrainConfig, seed: int):
    model = build(spec, seed)
    model, hist = train(model, dataset, replace(train_cfg, seed=seed))
    return model, hist.best_val_accuracy, hist.best_epoch


def _train_all(cands: list[Candidate], dataset, cfg: SearchConfig, pool) -> list[Model]:
    seeds = [_child_seed(cfg.seed, c.generation, c.index) for c in cands]
    args = ([c.spec for c in cands], [dataset] * len(cands), [cfg.train] * len(cands), seeds)
    results = list(pool.map(_train_one, *args)) if pool else list(map(_train_one, *args))
    models = []
    for c, (model, acc, epoch) in zip(cands, results):
        c.val_accuracy, c.best_epoch = float(acc), int(epoch)
        models.append(model)
    return models


def next_generation(parent: ArchSpec, dataset, cfg: SearchConfig, rng: np.random.Generator,
                    generation: int = 1, pool=None):
    """Breed, filter, train and select one generation.

    Returns ``(new_parent_spec, record, models)`` where ``models`` are the
    trained children in record order.
    """
    ok, _ = feasible(parent, cfg.thresholds)
    if not ok:
        raise InfeasibleSeed("parent architecture violates the hardware thresholds")
    children: list[Candidate] = []
    discarded: list[Candidate] = []
    parent_hash = parent.spec_hash()
    draw = 0
    while len(children) < cfg.children:
        for attempt in range(cfg.attempt_cap):
            child = mutate(parent, cfg.space, rng)
            ok, report = feasible(child, cfg.thresholds)
            cand = Candidate(child, generation, draw, ok, report.to_dict(), parent=parent_hash)
            draw += 1
            if ok:
                children.append(cand)
                break
            discarded.append(cand)
        else:
            raise MutationStarvation(
                f"generation {generation}: {cfg.attempt_cap} consecutive mutations were infeasible; "
                "the thresholds are too tight for the search space")
    models = _train_all(children, dataset, cfg, pool)
    best = min(children, key=Candidate.rank_key)
    return best.spec, GenerationRecord(generation, parent_hash, children, discarded), models


def initial_parent(dataset_shape, num_classes: int, cfg: SearchConfig, rng) -> ArchSpec:
    """A single random block, redrawn until feasible."""
    for _ in range(cfg.attempt_cap * 10):
        spec = ArchSpec((random_block(cfg.space, rng),), num_classes, tuple(dataset_shape))
        if feasible(spec, cfg.thresholds)[0]:
            return spec
    raise InfeasibleSeed("could not draw a feasible single-block seed architecture")


def search(a0: ArchSpec | None, dataset, cfg: SearchConfig | None = None):
    """Run the evolutionary search; returns ``(best_spec, best_model, log)``."""
    cfg = cfg or SearchConfig()
    rng = np.random.default_rng(cfg.seed)
    if a0 is None:
        a0 = initial_parent(dataset.sample_shape, dataset.n_classes, cfg, rng)
    ok, report = feasible(a0, cfg.thresholds)
    if not ok:
        raise InfeasibleSeed(f"seed architecture is infeasible: {report.error or report.to_dict()}")
    pool = ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        seed_cand = Candidate(a0, 0, 0, True, report.to_dict())
        (best_model,) = _train_all([seed_cand], dataset, cfg, pool)
        best = seed_cand
        slog = SearchLog(seed_cand)
        parent = a0
        for g in range(1, cfg.generations + 1):
            parent, rec, models = next_generation(parent, dataset, cfg, rng, g, pool)
            for cand, model in zip(rec.children, models):
                if cand.rank_key() < best.rank_key():
                    best, best_model = cand, model
            rec.best_so_far = best.val_accuracy
            slog.generations.append(rec)
            log.info("generation %d: parent %s, best %.4f (%s)", g, parent.spec_hash(),
                     best.val_accuracy, best.spec.spec_hash())
    finally:
        if pool is not None:
            pool.shutdown()
    return best.spec, best_model, slog
