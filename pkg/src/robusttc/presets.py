"""The two reference architectures (flat 784-byte input, 10x1000 time series)."""

from __future__ import annotations

from robusttc.errors import UnknownPreset
from robusttc.tensornn.spec import ArchSpec, BlockSpec, PoolSpec


def flat_preset(num_classes: int = 20) -> ArchSpec:
    return ArchSpec(
        blocks=(
            BlockSpec(25, 7, 4, "valid", PoolSpec("avg", 2)),
            BlockSpec(90, 7, 5, "valid"),
            BlockSpec(70, 4, 4, "same"),
            BlockSpec(47, 3, 1, "same"),
        ),
        num_classes=num_classes,
        input_shape=(784, 1),
    )


def ts_preset(num_classes: int = 20) -> ArchSpec:
    # Convolution runs along the packet axis; the 1000 bytes are channels.
    return ArchSpec(
        blocks=(
            BlockSpec(17, 3, 1, "same"),
            BlockSpec(112, 4, 1, "same"),
        ),
        num_classes=num_classes,
        input_shape=(10, 1000),
    )


PRESETS = {"flat": flat_preset, "ts": ts_preset}


def preset(name: str, num_classes: int = 20) -> ArchSpec:
    try:
        return PRESETS[name](num_classes)
    except KeyError:
        raise UnknownPreset(f"unknown preset {name!r}; valid presets: {', '.join(sorted(PRESETS))}") from None
