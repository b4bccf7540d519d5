"""Flow assembly and the two tensor encodings."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from robusttc.errors import EmptyFlow, UnlabeledFlow
from robusttc.flowio.pcap import FlowKey, Packet

FLAT_LENGTH = 784
TS_PACKETS = 10
TS_BYTES = 1000


@dataclass
class RawFlow:
    key: FlowKey
    packets: list[Packet]
    label: int | None = None


@dataclass(frozen=True, eq=False)
class Sample:
    """One encoded flow. ``raw`` keeps the unnormalized bytes."""

    raw: np.ndarray
    mask: np.ndarray
    label: int

    @property
    def data(self) -> np.ndarray:
        return self.raw.astype(np.float32) / 255.0

    @property
    def shape(self):
        return self.raw.shape


def assemble_flows(packets: list[Packet],
                   labeler: Callable[[FlowKey], int | None] | Mapping | None = None,
                   strict: bool = False) -> list[RawFlow]:
    """Group packets by directional 5-tuple, keeping capture order.

    Flows come back in order of first appearance. ``labeler`` may be a
    callable or a mapping; a missing label raises ``UnlabeledFlow`` in strict
    mode and leaves ``label=None`` otherwise.
    """
    if isinstance(labeler, Mapping):
        lookup = labeler.get
    elif labeler is None:
        lookup = lambda key: None  # noqa: E731
    else:
        lookup = labeler
    flows: dict[FlowKey, RawFlow] = {}
    for pkt in packets:
        flow = flows.get(pkt.key)
        if flow is None:
            flow = flows[pkt.key] = RawFlow(pkt.key, [])
        flow.packets.append(pkt)
    for flow in flows.values():
        flow.label = lookup(flow.key)
        if flow.label is None and strict:
            raise UnlabeledFlow(f"no label for flow {flow.key}")
    return list(flows.values())


def _packet_bytes(pkt: Packet) -> tuple[np.ndarray, np.ndarray]:
    raw = np.frombuffer(pkt.link_payload, dtype=np.uint8)
    mask = np.ones(raw.shape, dtype=np.uint8)
    mask[:pkt.header_len] = 0
    return raw, mask


def _fit(raw: np.ndarray, mask: np.ndarray, length: int):
    out_raw = np.zeros(length, dtype=np.uint8)
    out_mask = np.zeros(length, dtype=np.uint8)
    n = min(length, raw.size)
    out_raw[:n] = raw[:n]
    out_mask[:n] = mask[:n]
    return out_raw, out_mask


def _label_of(flow: RawFlow) -> int:
    return -1 if flow.label is None else int(flow.label)


def encode_flat(flow: RawFlow, length: int = FLAT_LENGTH) -> Sample:
    """Concatenate every packet (headers included), then truncate or zero-pad."""
    if not flow.packets:
        raise EmptyFlow(f"flow {flow.key} has no packets")
    parts = [_packet_bytes(p) for p in flow.packets]
    raw = np.concatenate([r for r, _ in parts])
    mask = np.concatenate([m for _, m in parts])
    raw, mask = _fit(raw, mask, length)
    return Sample(raw.reshape(length, 1), mask.reshape(length, 1), _label_of(flow))


def encode_timeseries(flow: RawFlow, n_packets: int = TS_PACKETS,
                      n_bytes: int = TS_BYTES) -> Sample:
    """One row per packet for the first ``n_packets`` packets."""
    if not flow.packets:
        raise EmptyFlow(f"flow {flow.key} has no packets")
    raw = np.zeros((n_packets, n_bytes), dtype=np.uint8)
    mask = np.zeros((n_packets, n_bytes), dtype=np.uint8)
    for i, pkt in enumerate(flow.packets[:n_packets]):
        raw[i], mask[i] = _fit(*_packet_bytes(pkt), n_bytes)
    return Sample(raw, mask, _label_of(flow))


def encode(flow: RawFlow, fmt: str) -> Sample:
    if fmt == "flat":
        return encode_flat(flow)
    if fmt in ("timeseries", "ts"):
        return encode_timeseries(flow)
    raise ValueError(f"unknown format {fmt!r}")
