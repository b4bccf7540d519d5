"""Architecture genome: an ordered list of Conv1D blocks plus an implicit
GAP -> dense -> softmax head."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace

from robusttc.errors import InvalidSpec


@dataclass(frozen=True)
class PoolSpec:
    kind: str
    size: int

    def __post_init__(self):
        if self.kind not in ("max", "avg"):
            raise InvalidSpec(f"pool kind must be 'max' or 'avg', got {self.kind!r}")
        if self.size < 2:
            raise InvalidSpec(f"pool size must be >= 2, got {self.size}")


@dataclass(frozen=True)
class BlockSpec:
    filters: int
    kernel: int
    stride: int = 1
    padding: str = "valid"
    pool: PoolSpec | None = None
    dropout: float = 0.0

    def __post_init__(self):
        if self.filters < 1 or self.kernel < 1 or self.stride < 1:
            raise InvalidSpec("filters, kernel and stride must all be >= 1")
        if self.padding not in ("valid", "same"):
            raise InvalidSpec(f"padding must be 'valid' or 'same', got {self.padding!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidSpec(f"dropout must lie in [0, 1), got {self.dropout}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["dropout"] = float(self.dropout)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BlockSpec":
        pool = d.get("pool")
        return cls(int(d["filters"]), int(d["kernel"]), int(d.get("stride", 1)),
                   d.get("padding", "valid"),
                   PoolSpec(pool["kind"], int(pool["size"])) if pool else None,
                   float(d.get("dropout", 0.0)))


@dataclass(frozen=True)
class ArchSpec:
    blocks: tuple[BlockSpec, ...]
    num_classes: int
    input_shape: tuple[int, int] = field(default=(784, 1))

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        object.__setattr__(self, "input_shape", tuple(int(v) for v in self.input_shape))
        if self.num_classes < 1:
            raise InvalidSpec("num_classes must be >= 1")

    def to_dict(self) -> dict:
        return {"blocks": [b.to_dict() for b in self.blocks],
                "num_classes": self.num_classes,
                "input_shape": list(self.input_shape)}

    @classmethod
    def from_dict(cls, d: dict) -> "ArchSpec":
        return cls(tuple(BlockSpec.from_dict(b) for b in d["blocks"]),
                   int(d["num_classes"]), tuple(d["input_shape"]))

    def to_json(self) -> str:
        """Canonical JSON: sorted keys, no whitespace."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "ArchSpec":
        return cls.from_dict(json.loads(text))

    def spec_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()[:16]

    def with_blocks(self, blocks) -> "ArchSpec":
        return replace(self, blocks=tuple(blocks))


def conv_out_len(length: int, kernel: int, stride: int, padding: str) -> int:
    if padding == "same":
        return -(-length // stride)
    return (length - kernel) // stride + 1


def pool_out_len(length: int, size: int) -> int:
    return -(-length // size)
