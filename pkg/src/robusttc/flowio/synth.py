"""Seeded synthetic stand-in for a labeled capture corpus.

Every packet carries a fixed-layout 40-byte IPv4+TCP header whose fields do
not depend on the class. Payloads are uniform byte noise with a
class-specific motif written at a class-specific offset, so classes can only
be told apart from payload bytes, which are exactly the attackable ones.
"""

from __future__ import annotations

import struct

import numpy as np

from robusttc.flowio.dataset import Dataset
from robusttc.flowio.flows import RawFlow, encode
from robusttc.flowio.pcap import PROTO_TCP, FlowKey, Packet

HEADER_LEN = 40


def _header(rng: np.random.Generator, payload_len: int) -> bytes:
    ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, HEADER_LEN + payload_len,
                     int(rng.integers(0, 1 << 16)), 0x4000, 64, PROTO_TCP, 0,
                     bytes(4), bytes(4))
    tcp = struct.pack("!HHIIBBHHH", 443, 50000, int(rng.integers(0, 1 << 32)), 0,
                      5 << 4, 0x18, 512, 0, 0)
    return ip + tcp


def class_motifs(n_classes: int, motif_len: int, max_offset: int, seed: int):
    """Per-class (offset, motif bytes); offsets are pairwise distinct."""
    rng = np.random.default_rng([seed, 0xC1A55])
    offsets = rng.choice(max_offset, size=n_classes, replace=False)
    motifs = rng.integers(0, 256, size=(n_classes, motif_len), dtype=np.uint8)
    return [(int(o), m) for o, m in zip(offsets, motifs)]


def synth_flows(n_classes: int, flows_per_class: int, seed: int = 0, *,
                motif_len: int = 16, max_offset: int = 96, jitter: int = 2,
                motif_noise: int = 24, packets: tuple[int, int] = (2, 12),
                payload_len: tuple[int, int] = (120, 400)) -> list[RawFlow]:
    if n_classes < 2:
        raise ValueError("n_classes must be >= 2")
    if flows_per_class < 1:
        raise ValueError("flows_per_class must be >= 1")
    motifs = class_motifs(n_classes, motif_len, max_offset, seed)
    rng = np.random.default_rng([seed, 0xF10])
    flows = []
    for c in range(n_classes):
        offset, motif = motifs[c]
        for i in range(flows_per_class):
            key = FlowKey(bytes([10, 0, c // 256, c % 256]), bytes([10, 1, i // 256, i % 256]),
                          50000, 443, PROTO_TCP)
            n_pkt = int(rng.integers(packets[0], packets[1] + 1))
            ts = 1.0e9 + float(rng.uniform(0, 1e5))
            pkts = []
            for _ in range(n_pkt):
                n_pay = int(rng.integers(payload_len[0], payload_len[1] + 1))
                payload = rng.integers(0, 256, size=n_pay, dtype=np.uint8)
                at = offset + int(rng.integers(-jitter, jitter + 1))
                at = min(max(at, 0), n_pay - motif_len)
                noisy = motif.astype(np.int16) + rng.integers(-motif_noise, motif_noise + 1, motif_len)
                payload[at:at + motif_len] = np.clip(noisy, 0, 255).astype(np.uint8)
                pkts.append(Packet(ts, _header(rng, n_pay) + payload.tobytes(), 20, 20, "TCP", key))
                ts += float(rng.exponential(0.01))
            flows.append(RawFlow(key, pkts, c))
    return flows


def synth_dataset(n_classes: int, flows_per_class: int, format: str = "flat",
                  seed: int = 0, **knobs) -> Dataset:
    """Generate and encode a balanced synthetic dataset (all tags = train)."""
    fmt = "timeseries" if format in ("ts", "timeseries") else format
    if fmt not in ("flat", "timeseries"):
        raise ValueError(f"unknown format {format!r}")
    flows = synth_flows(n_classes, flows_per_class, seed, **knobs)
    samples = [encode(f, fmt) for f in flows]
    names = [f"class{c:02d}" for c in range(n_classes)]
    return Dataset.from_samples(samples, names, fmt=fmt)
