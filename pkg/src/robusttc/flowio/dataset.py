"""In-memory dataset container and the stratified splitter."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from robusttc.errors import ClassTooSmall, EmptySplit, ShapeMismatch
from robusttc.flowio.flows import Sample

TRAIN, VAL, TEST = 0, 1, 2
SPLIT_CODES = {"train": TRAIN, "val": VAL, "test": TEST}
FORMAT_CODES = {"flat": 0, "timeseries": 1}


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable batch of encoded flows.

    Arrays are stored unnormalized (``raw`` is uint8, N x dim0 x dim1);
    :meth:`arrays` hands out the [0, 1] float view used by the models.
    """

    raw: np.ndarray
    mask: np.ndarray
    labels: np.ndarray
    tags: np.ndarray
    class_names: tuple[str, ...]
    fmt: str = "flat"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        raw = np.asarray(self.raw, dtype=np.uint8)
        mask = np.asarray(self.mask, dtype=np.uint8)
        if raw.ndim != 3 or raw.shape != mask.shape:
            raise ShapeMismatch(f"raw {raw.shape} and mask {mask.shape} must be equal N x d0 x d1")
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        tags = np.asarray(self.tags, dtype=np.uint8).reshape(-1)
        if not (len(labels) == len(tags) == raw.shape[0]):
            raise ShapeMismatch("labels/tags length differs from sample count")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.class_names)):
            raise ValueError("label outside [0, n_classes)")
        if mask.size and mask.max() > 1:
            raise ValueError("mask must be binary")
        if self.fmt not in FORMAT_CODES:
            raise ValueError(f"unknown format {self.fmt!r}")
        object.__setattr__(self, "raw", _frozen(raw))
        object.__setattr__(self, "mask", _frozen(mask))
        object.__setattr__(self, "labels", _frozen(labels))
        object.__setattr__(self, "tags", _frozen(tags))
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @classmethod
    def from_samples(cls, samples, class_names, tags=None, fmt="flat"):
        samples = list(samples)
        if samples:
            raw = np.stack([s.raw for s in samples])
            mask = np.stack([s.mask for s in samples])
        else:
            shape = (784, 1) if fmt == "flat" else (10, 1000)
            raw = np.zeros((0, *shape), np.uint8)
            mask = np.zeros((0, *shape), np.uint8)
        labels = [s.label for s in samples]
        if tags is None:
            tags = np.zeros(len(samples), np.uint8)
        return cls(raw, mask, labels, tags, tuple(class_names), fmt)

    def __len__(self):
        return self.raw.shape[0]

    def __getitem__(self, i) -> Sample:
        return Sample(self.raw[i], self.mask[i], int(self.labels[i]))

    @property
    def sample_shape(self) -> tuple[int, int]:
        return tuple(self.raw.shape[1:])

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def with_tags(self, tags) -> "Dataset":
        return Dataset(self.raw, self.mask, self.labels, tags, self.class_names, self.fmt)

    def indices(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.tags == SPLIT_CODES[split])

    def arrays(self, split: str | None = None, dtype=np.float32):
        """Return ``(x, y, mask)`` with x normalized to [0, 1]."""
        key = (split, np.dtype(dtype).str)
        if key not in self._cache:
            idx = slice(None) if split is None else self.indices(split)
            dtype = np.dtype(dtype)
            x = self.raw[idx].astype(dtype) / dtype.type(255.0)
            self._cache[key] = (_frozen(x), self.labels[idx], _frozen(self.mask[idx].astype(dtype)))
        x, y, m = self._cache[key]
        if split is not None and len(y) == 0:
            raise EmptySplit(f"split {split!r} is empty")
        return x, y, m

    def class_counts(self) -> dict[str, int]:
        counts = np.bincount(self.labels, minlength=self.n_classes)
        return {name: int(c) for name, c in zip(self.class_names, counts)}

    def digest(self) -> str:
        h = hashlib.sha256()
        for a in (self.raw, self.mask, self.labels, self.tags):
            h.update(a.tobytes())
        h.update("\0".join(self.class_names).encode())
        return h.hexdigest()


def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def split_dataset(ds: Dataset, test_frac: float = 0.2, val_frac_of_train: float = 0.2,
                  seed: int = 0) -> Dataset:
    """Stratified two-stage split: test first, then validation out of the rest."""
    for name, frac in (("test_frac", test_frac), ("val_frac_of_train", val_frac_of_train)):
        if not 0 < frac < 1:
            raise ValueError(f"{name} must lie in (0, 1), got {frac}")
    rng = np.random.default_rng(seed)
    tags = np.full(len(ds), TRAIN, dtype=np.uint8)
    for c in range(ds.n_classes):
        idx = np.flatnonzero(ds.labels == c)
        if 0 < idx.size < 3:
            raise ClassTooSmall(f"class {ds.class_names[c]!r} has only {idx.size} samples")
        idx = rng.permutation(idx)
        n_test = _round_half_up(test_frac * idx.size)
        n_val = _round_half_up(val_frac_of_train * (idx.size - n_test))
        tags[idx[:n_test]] = TEST
        tags[idx[n_test:n_test + n_val]] = VAL
    return ds.with_tags(tags)
