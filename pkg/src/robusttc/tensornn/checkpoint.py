"""TNN1 checkpoint container (little-endian).

``"TNN1" | u16 version | u32 len | canonical spec JSON | u32 n_tensors |
n_tensors x (u16 len, utf-8 name, u8 ndim, ndim x u32 dim, float32 data) |
u32 CRC32 over every preceding byte``
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from robusttc.errors import BadMagic, ChecksumMismatch, ShapeMismatch, VersionMismatch
from robusttc.tensornn.model import Model
from robusttc.tensornn.spec import ArchSpec

MAGIC = b"TNN1"
VERSION = 1


def dumps_model(model: Model) -> bytes:
    meta = json.dumps({"spec": model.spec.to_dict()}, sort_keys=True, separators=(",", ":")).encode()
    parts = [MAGIC, struct.pack("<HI", VERSION, len(meta)), meta, struct.pack("<I", len(model.params))]
    for name, arr in model.params.items():
        enc = name.encode()
        parts.append(struct.pack("<H", len(enc)) + enc)
        parts.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


def loads_model(blob: bytes) -> Model:
    if blob[:4] != MAGIC:
        raise BadMagic("not a TNN1 checkpoint")
    version, meta_len = struct.unpack_from("<HI", blob, 4)
    if version != VERSION:
        raise VersionMismatch(f"checkpoint version {version}, reader supports {VERSION}")
    if len(blob) < 14 or zlib.crc32(blob[:-4]) != struct.unpack_from("<I", blob, len(blob) - 4)[0]:
        raise ChecksumMismatch("checkpoint CRC32 does not match contents")
    pos = 10
    spec = ArchSpec.from_dict(json.loads(blob[pos:pos + meta_len])["spec"])
    pos += meta_len
    (n,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    params = {}
    for _ in range(n):
        (ln,) = struct.unpack_from("<H", blob, pos)
        name = blob[pos + 2:pos + 2 + ln].decode()
        pos += 2 + ln
        ndim = blob[pos]
        shape = struct.unpack_from(f"<{ndim}I", blob, pos + 1)
        pos += 1 + 4 * ndim
        count = int(np.prod(shape))
        params[name] = np.frombuffer(blob, "<f4", count, pos).reshape(shape).astype(np.float32)
        pos += 4 * count
    if pos != len(blob) - 4:
        raise ShapeMismatch("trailing bytes after tensors")
    from robusttc.tensornn.model import build

    expected = build(spec, 0).params
    for name, arr in expected.items():
        if name not in params or params[name].shape != arr.shape:
            raise ShapeMismatch(f"tensor {name} missing or has wrong shape")
    return Model(spec, {k: params[k] for k in expected}, np.float32)


def save_model(model: Model, path) -> None:
    Path(path).write_bytes(dumps_model(model))


def load_model(path) -> Model:
    return loads_model(Path(path).read_bytes())
