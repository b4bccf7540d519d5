"""Classic libpcap reader for Ethernet captures.

Only IPv4 TCP/UDP frames survive. The Ethernet header is stripped and the
IPv4 source/destination fields are zeroed in the returned bytes; the flow
key is read before anonymization so that flows can still be told apart.
"""

from __future__ import annotations

import logging
import struct
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple

from robusttc.errors import BadMagic, TruncatedHeader, UnsupportedLinkType

log = logging.getLogger(__name__)

GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16
LINKTYPE_ETHERNET = 1

ETH_HEADER_LEN = 14
ETHERTYPE_IPV4 = 0x0800
ETHERTYPE_VLAN = (0x8100, 0x88A8)

PROTO_TCP = 6
PROTO_UDP = 17

# magic as read little-endian -> (struct byte order, timestamp fraction divisor)
_MAGICS = {
    0xA1B2C3D4: ("<", 1e6),
    0xD4C3B2A1: (">", 1e6),
    0xA1B23C4D: ("<", 1e9),
    0x4D3CB2A1: (">", 1e9),
}


class FlowKey(NamedTuple):
    src_ip: bytes
    dst_ip: bytes
    src_port: int
    dst_port: int
    protocol: int

    def __str__(self):
        src = ".".join(str(b) for b in self.src_ip)
        dst = ".".join(str(b) for b in self.dst_ip)
        proto = {PROTO_TCP: "TCP", PROTO_UDP: "UDP"}.get(self.protocol, str(self.protocol))
        return f"{proto} {src}:{self.src_port} -> {dst}:{self.dst_port}"


@dataclass(frozen=True)
class Packet:
    """One IPv4 TCP/UDP packet, Ethernet removed, addresses zeroed.

    ``key`` holds the original 5-tuple; it lives in memory only and is never
    written to disk.
    """

    timestamp: float
    link_payload: bytes
    ip_header_len: int
    transport_header_len: int
    transport: str
    key: FlowKey

    @property
    def header_len(self) -> int:
        return self.ip_header_len + self.transport_header_len


def _decode_frame(frame: bytes, timestamp: float) -> Packet | str:
    """Return a Packet, or a skip reason string."""
    if len(frame) < ETH_HEADER_LEN:
        return "malformed"
    ethertype = struct.unpack_from("!H", frame, 12)[0]
    offset = ETH_HEADER_LEN
    while ethertype in ETHERTYPE_VLAN:
        if len(frame) < offset + 4:
            return "malformed"
        ethertype = struct.unpack_from("!H", frame, offset + 2)[0]
        offset += 4
    if ethertype != ETHERTYPE_IPV4:
        return "non_ip"

    ip = frame[offset:]
    if len(ip) < 20 or ip[0] >> 4 != 4:
        return "malformed"
    ihl = (ip[0] & 0x0F) * 4
    total_len = struct.unpack_from("!H", ip, 2)[0]
    if ihl < 20 or ihl > len(ip):
        return "malformed"
    # Trim Ethernet trailer padding when the IP length field is sane.
    if ihl <= total_len <= len(ip):
        ip = ip[:total_len]
    frag = struct.unpack_from("!H", ip, 6)[0] & 0x1FFF
    if frag:
        return "malformed"
    proto = ip[9]
    if proto == PROTO_TCP:
        if len(ip) < ihl + 20:
            return "malformed"
        thl = (ip[ihl + 12] >> 4) * 4
        if thl < 20:
            return "malformed"
        transport = "TCP"
    elif proto == PROTO_UDP:
        thl = 8
        transport = "UDP"
    else:
        return "non_tcp_udp"
    if ihl + thl > len(ip):
        return "malformed"

    sport, dport = struct.unpack_from("!HH", ip, ihl)
    key = FlowKey(bytes(ip[12:16]), bytes(ip[16:20]), sport, dport, proto)
    anon = bytearray(ip)
    anon[12:20] = bytes(8)
    return Packet(timestamp, bytes(anon), ihl, thl, transport, key)


def parse_pcap(data: bytes, skipped: Counter | None = None) -> list[Packet]:
    """Decode a classic PCAP byte stream.

    Frames that are not IPv4 TCP/UDP, or are malformed, are dropped; pass a
    ``Counter`` as ``skipped`` to receive per-reason counts.
    """
    data = memoryview(data).tobytes() if not isinstance(data, bytes) else data
    if len(data) < 4:
        raise BadMagic("file too short to hold a PCAP magic number")
    magic = struct.unpack_from("<I", data, 0)[0]
    if magic not in _MAGICS:
        raise BadMagic(f"unrecognized PCAP magic 0x{magic:08x}")
    order, frac_div = _MAGICS[magic]
    if len(data) < GLOBAL_HEADER_LEN:
        raise TruncatedHeader("PCAP global header shorter than 24 bytes")
    linktype = struct.unpack_from(order + "I", data, 20)[0] & 0x0FFFFFFF
    if linktype != LINKTYPE_ETHERNET:
        raise UnsupportedLinkType(f"link type {linktype} is not Ethernet (1)")

    skipped = Counter() if skipped is None else skipped
    packets = []
    pos = GLOBAL_HEADER_LEN
    record = struct.Struct(order + "IIII")
    while pos < len(data):
        if pos + RECORD_HEADER_LEN > len(data):
            raise TruncatedHeader(f"record header at offset {pos} is truncated")
        ts_sec, ts_frac, incl_len, _orig_len = record.unpack_from(data, pos)
        pos += RECORD_HEADER_LEN
        if pos + incl_len > len(data):
            raise TruncatedHeader(f"record at offset {pos - RECORD_HEADER_LEN} declares "
                                  f"{incl_len} bytes, only {len(data) - pos} remain")
        frame = data[pos:pos + incl_len]
        pos += incl_len
        result = _decode_frame(frame, ts_sec + ts_frac / frac_div)
        if isinstance(result, str):
            skipped[result] += 1
        else:
            packets.append(result)
    n_skip = sum(skipped.values())
    if n_skip:
        log.warning("skipped %d frames (%s)", n_skip, dict(skipped))
    return packets


def write_pcap(frames, nanosecond: bool = False, linktype: int = LINKTYPE_ETHERNET) -> bytes:
    """Serialize ``(timestamp, frame_bytes)`` pairs as a little-endian PCAP."""
    magic = 0xA1B23C4D if nanosecond else 0xA1B2C3D4
    div = 10**9 if nanosecond else 10**6
    out = [struct.pack("<IHHiIII", magic, 2, 4, 0, 0, 65535, linktype)]
    for ts, frame in frames:
        sec = int(ts)
        frac = int(round((ts - sec) * div))
        out.append(struct.pack("<IIII", sec, frac, len(frame), len(frame)))
        out.append(bytes(frame))
    return b"".join(out)
