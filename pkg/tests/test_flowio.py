import struct
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import ARP, ether, ipv4
from robusttc.errors import (BadMagic, ChecksumMismatch, ClassTooSmall, EmptyFlow, ShapeMismatch,
                             TruncatedHeader, UnlabeledFlow, UnsupportedLinkType, VersionMismatch)
from robusttc.flowio import (Dataset, FlowKey, Packet, RawFlow, assemble_flows, dumps_flowset,
                             encode_flat, encode_timeseries, loads_flowset, parse_pcap, read_flowset,
                             split_dataset, synth_dataset, write_flowset, write_pcap)
from robusttc.flowio.dataset import TEST, TRAIN, VAL


def pcap_header(magic=0xA1B2C3D4, order="<", linktype=1):
    return struct.pack(order + "IHHiIII", magic, 2, 4, 0, 0, 65535, linktype)


KEY_AB = FlowKey(b"\x01\x01\x01\x01", b"\x02\x02\x02\x02", 1000, 80, 6)
KEY_BA = FlowKey(b"\x02\x02\x02\x02", b"\x01\x01\x01\x01", 1000, 80, 6)


def make_packet(key=KEY_AB, hdr=(20, 20), payload=4, ts=0.0, fill=None):
    n = sum(hdr) + payload
    body = bytes((fill if fill is not None else (i % 251) + 1) for i in range(n))
    return Packet(ts, body, hdr[0], hdr[1], "TCP", key)


# -- parse_pcap ----------------------------------------------------------------

def test_header_only_capture_is_empty():
    assert parse_pcap(pcap_header()) == []


def test_single_tcp_frame(frame):
    data = write_pcap([(1.5, frame(4))])
    (pkt,) = parse_pcap(data)
    assert len(pkt.link_payload) == 44
    assert (pkt.ip_header_len, pkt.transport_header_len) == (20, 20)
    assert pkt.link_payload[12:20] == bytes(8)
    assert pkt.link_payload[40:] == bytes([1, 2, 3, 4])
    assert pkt.transport == "TCP"
    assert pkt.timestamp == pytest.approx(1.5)
    # the original tuple is kept for flow grouping
    assert pkt.key == FlowKey(bytes([192, 168, 1, 2]), bytes([10, 0, 0, 9]), 1234, 80, 6)


def test_arp_frame_is_skipped_and_counted():
    skipped = Counter()
    assert parse_pcap(write_pcap([(0.0, ARP)]), skipped) == []
    assert sum(skipped.values()) == 1


def test_udp_and_options(frame):
    data = write_pcap([(0, frame(3, proto=17)), (1, frame(2, ihl=6, tcp_words=8))])
    udp, tcp = parse_pcap(data)
    assert (udp.ip_header_len, udp.transport_header_len, udp.transport) == (20, 8, "UDP")
    assert (tcp.ip_header_len, tcp.transport_header_len) == (24, 32)
    assert len(tcp.link_payload) == 24 + 32 + 2


def test_ethernet_padding_is_trimmed(frame):
    raw = frame(2) + bytes(10)  # trailer padding after the IP datagram
    (pkt,) = parse_pcap(write_pcap([(0, raw)]))
    assert len(pkt.link_payload) == 42


def test_ipv6_and_other_protocols_skipped():
    v6 = ether(bytes([0x60]) + bytes(47), ethertype=0x86DD)
    icmp = ether(ipv4(4, proto=1))
    skipped = Counter()
    assert parse_pcap(write_pcap([(0, v6), (0, icmp)]), skipped) == []
    assert skipped == Counter({"non_ip": 1, "non_tcp_udp": 1})


def test_malformed_frames_skipped():
    bad_ihl = bytearray(ether(ipv4(4)))
    bad_ihl[14] = 0x43  # IHL 12 bytes
    short = ether(ipv4(4))[:14 + 30]  # TCP header cut
    skipped = Counter()
    assert parse_pcap(write_pcap([(0, bytes(bad_ihl)), (0, short)]), skipped) == []
    assert skipped["malformed"] == 2


@pytest.mark.parametrize("magic,order,div", [
    (0xA1B2C3D4, "<", 1e6), (0xA1B2C3D4, ">", 1e6), (0xA1B23C4D, "<", 1e9), (0xA1B23C4D, ">", 1e9)])
def test_magic_variants(frame, magic, order, div):
    f = frame(4)
    rec = struct.pack(order + "IIII", 7, 250, len(f), len(f)) + f
    (pkt,) = parse_pcap(pcap_header(magic, order) + rec)
    assert pkt.timestamp == pytest.approx(7 + 250 / div)
    assert len(pkt.link_payload) == 44


def test_pcap_errors(frame):
    with pytest.raises(BadMagic):
        parse_pcap(b"\x00" * 40)
    with pytest.raises(UnsupportedLinkType):
        parse_pcap(pcap_header(linktype=101))
    with pytest.raises(TruncatedHeader):
        parse_pcap(write_pcap([(0, frame(4))])[:-3])
    with pytest.raises(TruncatedHeader):
        parse_pcap(pcap_header() + b"\x00" * 5)


@settings(max_examples=60, deadline=None)
@given(src=st.binary(min_size=4, max_size=4), dst=st.binary(min_size=4, max_size=4),
       n=st.integers(0, 60), proto=st.sampled_from([6, 17]))
def test_parsed_addresses_always_zero(src, dst, n, proto):
    (pkt,) = parse_pcap(write_pcap([(0, ether(ipv4(n, proto, tuple(src), tuple(dst))))]))
    assert pkt.link_payload[12:20] == bytes(8)
    assert pkt.key.src_ip == src and pkt.key.dst_ip == dst


# -- assemble_flows ------------------------------------------------------------

def test_flows_are_directional():
    flows = assemble_flows([make_packet(KEY_AB), make_packet(KEY_BA)])
    assert len(flows) == 2


def test_empty_packets_give_no_flows():
    assert assemble_flows([]) == []


def test_interleaved_flows_preserve_order():
    pk = [make_packet(KEY_AB, ts=0), make_packet(KEY_BA, ts=1), make_packet(KEY_AB, ts=2),
          make_packet(KEY_BA, ts=3), make_packet(KEY_AB, ts=4)]
    a, b = assemble_flows(pk)
    assert [p.timestamp for p in a.packets] == [0, 2, 4]
    assert [p.timestamp for p in b.packets] == [1, 3]


def test_labeling_and_strict_mode():
    flows = assemble_flows([make_packet(KEY_AB), make_packet(KEY_BA)], {KEY_AB: 3})
    assert [f.label for f in flows] == [3, None]
    with pytest.raises(UnlabeledFlow, match="2.2.2.2"):
        assemble_flows([make_packet(KEY_BA)], {KEY_AB: 3}, strict=True)


# -- encoders ------------------------------------------------------------------

def test_flat_encoding_layout():
    s = encode_flat(RawFlow(KEY_AB, [make_packet(payload=4)], 0))
    assert s.data.shape == (784, 1)
    m = s.mask[:, 0]
    assert not m[:40].any() and m[40:44].all() and not m[44:].any()
    assert (s.raw[:44, 0] > 0).all() and not s.raw[44:].any()


def test_flat_exact_length_has_no_padding():
    flow = RawFlow(KEY_AB, [make_packet(payload=784 - 40)], 0)
    s = encode_flat(flow)
    assert s.data.shape == (784, 1)
    assert (s.raw > 0).all() and s.mask[40:].all()


def test_normalization_endpoints():
    s = encode_flat(RawFlow(KEY_AB, [make_packet(payload=10, fill=255)], 0))
    assert s.data[0, 0] == 1.0 and s.data[-1, 0] == 0.0


def test_flat_concatenates_every_packet_with_headers():
    flow = RawFlow(KEY_AB, [make_packet(payload=4), make_packet(hdr=(20, 8), payload=2)], 1)
    s = encode_flat(flow)
    expected = np.r_[np.zeros(40), np.ones(4), np.zeros(28), np.ones(2)]
    np.testing.assert_array_equal(s.mask[:74, 0], expected)
    assert not s.mask[74:].any()


def test_timeseries_padding_rows():
    flow = RawFlow(KEY_AB, [make_packet(ts=i) for i in range(3)], 2)
    s = encode_timeseries(flow)
    assert s.data.shape == (10, 1000) and s.mask.shape == (10, 1000)
    assert s.raw[:3].any(axis=1).all()
    assert not s.raw[3:].any() and not s.mask[3:].any()


def test_timeseries_keeps_first_ten_packets():
    flow = RawFlow(KEY_AB, [make_packet(payload=i + 1, ts=i) for i in range(12)], 0)
    s = encode_timeseries(flow)
    assert [int(s.mask[i].sum()) for i in range(10)] == list(range(1, 11))


def test_timeseries_truncates_long_packet():
    pkt = make_packet(payload=1160)  # 1200 bytes on the wire
    s = encode_timeseries(RawFlow(KEY_AB, [pkt], 0))
    np.testing.assert_array_equal(s.raw[0], np.frombuffer(pkt.link_payload[:1000], np.uint8))
    assert s.mask[0, 40:].all() and not s.mask[0, :40].any()


def test_empty_flow_rejected():
    with pytest.raises(EmptyFlow):
        encode_flat(RawFlow(KEY_AB, [], 0))
    with pytest.raises(EmptyFlow):
        encode_timeseries(RawFlow(KEY_AB, [], 0))


packet_st = st.builds(
    lambda ihl, thl, n, seed: make_packet(hdr=(ihl, thl), payload=n, fill=None),
    st.integers(5, 15).map(lambda w: 4 * w), st.sampled_from([8, 20, 32, 60]),
    st.integers(0, 400), st.integers(0, 10))


@settings(max_examples=80, deadline=None)
@given(st.lists(packet_st, min_size=1, max_size=14))
def test_mask_marks_exactly_payload_bytes(packets):
    """Rebuild the expected mask from the packet list independently of the encoder."""
    flow = RawFlow(KEY_AB, packets, 0)
    marks = []
    for p in packets:
        marks += [0] * p.header_len + [1] * (len(p.link_payload) - p.header_len)
    flat = encode_flat(flow)
    exp = (marks + [0] * 784)[:784]
    np.testing.assert_array_equal(flat.mask[:, 0], exp)
    assert flat.data.min() >= 0 and flat.data.max() <= 1
    ts = encode_timeseries(flow)
    assert ts.data.shape == (10, 1000)
    for i, p in enumerate(packets[:10]):
        row = [0] * p.header_len + [1] * (len(p.link_payload) - p.header_len)
        np.testing.assert_array_equal(ts.mask[i], (row + [0] * 1000)[:1000])
    assert not ts.mask[len(packets):].any()


# -- split ---------------------------------------------------------------------

def small_dataset(per_class=100, n_classes=3, fmt="flat"):
    rng = np.random.default_rng(1)
    shape = (784, 1) if fmt == "flat" else (10, 1000)
    n = per_class * n_classes
    raw = rng.integers(0, 256, (n, *shape), dtype=np.uint8)
    mask = rng.integers(0, 2, (n, *shape), dtype=np.uint8)
    labels = np.repeat(np.arange(n_classes), per_class)
    return Dataset(raw, mask, labels, np.zeros(n), [f"c{i}" for i in range(n_classes)], fmt)


def test_split_counts_per_class():
    ds = split_dataset(small_dataset(100), 0.2, 0.2, seed=3)
    for c in range(3):
        tags = ds.tags[ds.labels == c]
        assert (np.sum(tags == TRAIN), np.sum(tags == VAL), np.sum(tags == TEST)) == (64, 16, 20)


def test_split_is_deterministic():
    a = split_dataset(small_dataset(), 0.2, 0.2, seed=5)
    b = split_dataset(small_dataset(), 0.2, 0.2, seed=5)
    np.testing.assert_array_equal(a.tags, b.tags)
    c = split_dataset(small_dataset(), 0.2, 0.2, seed=6)
    assert not np.array_equal(a.tags, c.tags)


def test_split_rejects_tiny_class_and_bad_fractions():
    ds = small_dataset(100)
    tiny = Dataset(ds.raw[:102], ds.mask[:102], np.r_[np.zeros(100), [1, 1]], np.zeros(102), ["a", "b"])
    with pytest.raises(ClassTooSmall):
        split_dataset(tiny)
    with pytest.raises(ValueError):
        split_dataset(ds, 0.0, 0.2)


@settings(max_examples=40, deadline=None)
@given(counts=st.lists(st.integers(3, 60), min_size=2, max_size=4),
       test_frac=st.floats(0.05, 0.6), val_frac=st.floats(0.05, 0.6), seed=st.integers(0, 99))
def test_split_is_stratified_up_to_rounding(counts, test_frac, val_frac, seed):
    labels = np.repeat(np.arange(len(counts)), counts)
    n = len(labels)
    ds = Dataset(np.zeros((n, 4, 1), np.uint8), np.zeros((n, 4, 1), np.uint8), labels,
                 np.zeros(n), [str(i) for i in range(len(counts))])
    out = split_dataset(ds, test_frac, val_frac, seed)
    for c, total in enumerate(counts):
        tags = out.tags[labels == c]
        n_test = np.sum(tags == TEST)
        assert abs(n_test - test_frac * total) <= 0.5 + 1e-9
        assert abs(np.sum(tags == VAL) - val_frac * (total - n_test)) <= 0.5 + 1e-9


# -- FLOWSET -------------------------------------------------------------------

def assert_same_dataset(a, b):
    for name in ("raw", "mask", "labels", "tags"):
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
    assert a.class_names == b.class_names and a.fmt == b.fmt
    assert a.digest() == b.digest()


@pytest.mark.parametrize("fmt", ["flat", "timeseries"])
def test_flowset_round_trip(tmp_path, fmt):
    ds = split_dataset(small_dataset(10, 2, fmt), seed=0)
    write_flowset(ds, tmp_path / "x.fts")
    assert_same_dataset(ds, read_flowset(tmp_path / "x.fts"))


def test_flowset_header_fields():
    blob = dumps_flowset(small_dataset(4, 2, "timeseries").with_tags(np.full(8, 2)))
    assert blob[:4] == b"FTS1"
    version, fmt, _, d0, d1, n, c = struct.unpack_from("<HBBIIQH", blob, 4)
    assert (version, fmt, d0, d1, n, c) == (1, 1, 10, 1000, 8, 2)


def test_flowset_empty_dataset():
    ds = Dataset(np.zeros((0, 784, 1)), np.zeros((0, 784, 1)), [], [], ["a", "b"])
    back = loads_flowset(dumps_flowset(ds))
    assert len(back) == 0 and back.class_names == ("a", "b")


def test_flowset_rejects_corruption():
    blob = bytearray(dumps_flowset(small_dataset(3, 2)))
    with pytest.raises(BadMagic):
        loads_flowset(b"XTS1" + bytes(blob[4:]))
    bumped = bytearray(blob)
    bumped[4] = 2
    with pytest.raises(VersionMismatch):
        loads_flowset(bytes(bumped))
    flipped = bytearray(blob)
    flipped[200] ^= 0xFF
    with pytest.raises(ChecksumMismatch):
        loads_flowset(bytes(flipped))
    # consistent CRC but a body that disagrees with the declared sample count
    import zlib
    short = bytes(blob[:-4 - 50])
    with pytest.raises(ShapeMismatch):
        loads_flowset(short + struct.pack("<I", zlib.crc32(short)))


def test_unicode_class_names(tmp_path):
    ds = small_dataset(3, 2)
    ds = Dataset(ds.raw, ds.mask, ds.labels, ds.tags, ["Skype", "Zeus-β"])
    assert loads_flowset(dumps_flowset(ds)).class_names == ("Skype", "Zeus-β")


# -- synthetic generator ---------------------------------------------------------

def test_synth_size_and_shape(bench_data):
    assert len(bench_data) == 8000 and bench_data.sample_shape == (784, 1)
    assert set(bench_data.class_counts().values()) == {2000}


def test_synth_deterministic_and_timeseries():
    a = synth_dataset(3, 20, "timeseries", seed=4)
    b = synth_dataset(3, 20, "timeseries", seed=4)
    assert a.digest() == b.digest()
    assert a.sample_shape == (10, 1000)
    assert synth_dataset(3, 20, "timeseries", seed=5).digest() != a.digest()


def test_synth_header_masked_and_class_profiles_differ():
    ds = synth_dataset(4, 200, "flat", seed=0)
    assert not ds.mask[:, :40].any()  # first synthetic header
    profiles = np.stack([ds.raw[ds.labels == c, :, 0].mean(axis=0) for c in range(4)])
    for i in range(4):
        for j in range(i + 1, 4):
            assert np.abs(profiles[i] - profiles[j]).max() > 20


def test_synth_rejects_one_class():
    with pytest.raises(ValueError):
        synth_dataset(1, 10)
