"""Static cost model: shapes, parameters, FLOPs and peak activation size.

Conventions:

* parameters include BN gamma, beta and both moving statistics (4 per channel);
* a multiply-accumulate is 2 FLOPs; conv and dense biases are free;
  BN, ReLU and pooling (GAP included) cost 1 FLOP per output element;
  dropout is the identity at inference and costs nothing;
* ``max_tensor`` is the largest layer output element count; the input
  buffer is not counted.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

from robusttc.errors import InvalidSpec
from robusttc.tensornn.spec import ArchSpec, conv_out_len, pool_out_len


@dataclass(frozen=True)
class LayerShape:
    name: str
    kind: str
    out_shape: tuple[int, ...]
    params: int
    flops: int

    @property
    def size(self) -> int:
        n = 1
        for d in self.out_shape:
            n *= d
        return n


@dataclass(frozen=True)
class Thresholds:
    max_params: int = 70_000
    max_flops: int = 3_000_000
    max_tensor: int = 6_000

    def __post_init__(self):
        if min(self.max_params, self.max_flops, self.max_tensor) <= 0:
            raise ValueError("thresholds must be positive")


@dataclass
class CostReport:
    params: int = 0
    flops: int = 0
    max_tensor: int = 0
    per_layer: list[dict] = field(default_factory=list)
    error: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def shape_plan(spec: ArchSpec) -> list[LayerShape]:
    """Per-layer output shapes with their parameter and FLOP contributions."""
    length, cin = spec.input_shape
    if length < 1 or cin < 1:
        raise InvalidSpec(f"input shape {spec.input_shape} must be positive", layer_index=-1)
    plan: list[LayerShape] = []
    for i, b in enumerate(spec.blocks):
        out = conv_out_len(length, b.kernel, b.stride, b.padding)
        if out < 1:
            raise InvalidSpec(f"block {i}: conv k={b.kernel} s={b.stride} {b.padding} "
                              f"on length {length} leaves no output", layer_index=i)
        cout = b.filters
        elems = out * cout
        plan.append(LayerShape(f"block{i}.conv", "conv", (out, cout),
                               b.kernel * cin * cout + cout, 2 * b.kernel * cin * cout * out))
        plan.append(LayerShape(f"block{i}.bn", "bn", (out, cout), 4 * cout, elems))
        plan.append(LayerShape(f"block{i}.relu", "relu", (out, cout), 0, elems))
        length = out
        if b.pool is not None:
            length = pool_out_len(length, b.pool.size)
            plan.append(LayerShape(f"block{i}.pool", "pool", (length, cout), 0, length * cout))
        if b.dropout > 0:
            plan.append(LayerShape(f"block{i}.dropout", "dropout", (length, cout), 0, 0))
        cin = cout
    plan.append(LayerShape("gap", "gap", (cin,), 0, cin))
    k = spec.num_classes
    plan.append(LayerShape("dense", "dense", (k,), cin * k + k, 2 * cin * k))
    return plan


def count_params(spec: ArchSpec) -> int:
    return sum(layer.params for layer in shape_plan(spec))


def count_flops(spec: ArchSpec, kinds: tuple[str, ...] | None = None) -> int:
    """Total FLOPs, or only those of the given layer kinds."""
    return sum(layer.flops for layer in shape_plan(spec) if kinds is None or layer.kind in kinds)


def max_tensor(spec: ArchSpec) -> int:
    return max(layer.size for layer in shape_plan(spec))


def cost_report(spec: ArchSpec) -> CostReport:
    plan = shape_plan(spec)
    return CostReport(
        params=sum(layer.params for layer in plan),
        flops=sum(layer.flops for layer in plan),
        max_tensor=max(layer.size for layer in plan),
        per_layer=[{"name": layer.name, "out_shape": list(layer.out_shape),
                    "params": layer.params, "flops": layer.flops} for layer in plan],
    )


def feasible(spec: ArchSpec, th: Thresholds) -> tuple[bool, CostReport]:
    try:
        report = cost_report(spec)
    except InvalidSpec as exc:
        return False, CostReport(error=str(exc))
    ok = (report.params < th.max_params and report.flops < th.max_flops
          and report.max_tensor < th.max_tensor)
    return ok, report
