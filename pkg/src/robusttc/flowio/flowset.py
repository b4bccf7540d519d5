"""FLOWSET binary container (little-endian).

Layout::

    "FTS1" | u16 version | u8 format | u8 reserved | u32 dim0 | u32 dim1
    | u64 n_samples | u16 n_classes | n_classes x (u16 len, utf-8 name)
    | n_samples x (u16 label, u8 tag, dim0*dim1 raw bytes,
                   ceil(dim0*dim1/8) mask bytes, bit-packed LSB first)
    | u32 CRC32 over every preceding byte
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from robusttc.errors import BadMagic, ChecksumMismatch, ShapeMismatch, VersionMismatch
from robusttc.flowio.dataset import FORMAT_CODES, Dataset

MAGIC = b"FTS1"
VERSION = 1
_HEADER = struct.Struct("<4sHBBIIQH")
_FORMATS = {v: k for k, v in FORMAT_CODES.items()}


def _record_dtype(d: int) -> np.dtype:
    return np.dtype([("label", "<u2"), ("tag", "u1"),
                     ("raw", "u1", (d,)), ("mask", "u1", ((d + 7) // 8,))])


def dumps_flowset(ds: Dataset) -> bytes:
    dim0, dim1 = ds.sample_shape
    d = dim0 * dim1
    parts = [_HEADER.pack(MAGIC, VERSION, FORMAT_CODES[ds.fmt], 0, dim0, dim1, len(ds), ds.n_classes)]
    for name in ds.class_names:
        enc = name.encode("utf-8")
        parts.append(struct.pack("<H", len(enc)) + enc)
    rec = np.zeros(len(ds), dtype=_record_dtype(d))
    rec["label"] = ds.labels
    rec["tag"] = ds.tags
    rec["raw"] = ds.raw.reshape(len(ds), d)
    rec["mask"] = np.packbits(ds.mask.reshape(len(ds), d), axis=1, bitorder="little")
    parts.append(rec.tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def loads_flowset(blob: bytes) -> Dataset:
    if len(blob) < 4 or blob[:4] != MAGIC:
        raise BadMagic("not a FLOWSET file (expected magic 'FTS1')")
    if len(blob) < _HEADER.size + 4:
        raise ShapeMismatch("FLOWSET header truncated")
    _, version, fmt_code, _, dim0, dim1, n, n_classes = _HEADER.unpack_from(blob, 0)
    if version != VERSION:
        raise VersionMismatch(f"FLOWSET version {version}, reader supports {VERSION}")
    if zlib.crc32(blob[:-4]) != struct.unpack_from("<I", blob, len(blob) - 4)[0]:
        raise ChecksumMismatch("FLOWSET CRC32 does not match contents")
    if fmt_code not in _FORMATS:
        raise ShapeMismatch(f"unknown format code {fmt_code}")
    if fmt_code == FORMAT_CODES["flat"] and dim1 != 1:
        raise ShapeMismatch(f"flat FLOWSET must have dim1 == 1, got {dim1}")
    pos = _HEADER.size
    names = []
    for _ in range(n_classes):
        (length,) = struct.unpack_from("<H", blob, pos)
        pos += 2
        names.append(blob[pos:pos + length].decode("utf-8"))
        pos += length
    d = dim0 * dim1
    dt = _record_dtype(d)
    if len(blob) - 4 - pos != n * dt.itemsize:
        raise ShapeMismatch(f"body holds {len(blob) - 4 - pos} bytes, header implies {n * dt.itemsize}")
    rec = np.frombuffer(blob, dtype=dt, count=n, offset=pos)
    mask = np.unpackbits(rec["mask"], axis=1, count=d, bitorder="little") if n else np.zeros((0, d), np.uint8)
    return Dataset(rec["raw"].reshape(n, dim0, dim1), mask.reshape(n, dim0, dim1),
                   rec["label"].astype(np.int64), rec["tag"], tuple(names), _FORMATS[fmt_code])


def write_flowset(ds: Dataset, path) -> None:
    Path(path).write_bytes(dumps_flowset(ds))


def read_flowset(path) -> Dataset:
    return loads_flowset(Path(path).read_bytes())
