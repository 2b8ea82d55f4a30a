"""Binary checkpoint archive: named float32 tensors + config and schedule blobs.

Layout (all little-endian):
  magic "CMDC" | version u16
  config blob  : u32 length + UTF-8 JSON
  schedule blob: u32 length + UTF-8 JSON (may be empty)
  entry count  : u32
  per entry    : u16 name length + name | u8 ndim | u32 dims... | float32 data
  trailer      : CRC32 (u32) of everything after the magic

Round trips are bit-exact; truncation, duplicate names, version or CRC
mismatches are rejected without a partial load.
"""
from __future__ import annotations

import io
import json
import struct
import zlib

import numpy as np

from .data import _atomic_write
from .errors import IntegrityError

MAGIC = b"CMDC"
VERSION = 1


def save_checkpoint(params: dict[str, np.ndarray], path: str,
                    config: dict | None = None, schedule: dict | None = None):
    buf = io.BytesIO()
    for blob in (config, schedule):
        raw = json.dumps(blob, sort_keys=True).encode() if blob is not None else b""
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
    buf.write(struct.pack("<I", len(params)))
    for name, tensor in params.items():
        arr = np.ascontiguousarray(tensor, dtype="<f4")
        raw_name = name.encode()
        buf.write(struct.pack("<H", len(raw_name)))
        buf.write(raw_name)
        buf.write(struct.pack("<B", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        buf.write(arr.tobytes())
    body = struct.pack("<H", VERSION) + buf.getvalue()
    _atomic_write(path, MAGIC + body + struct.pack("<I", zlib.crc32(body)))


def load_checkpoint(path: str) -> tuple[dict[str, np.ndarray], dict | None, dict | None]:
    """-> (params, config, schedule); raises IntegrityError on any corruption."""
    with open(path, "rb") as f:
        blob = f.read()
    if len(blob) < 10 or blob[:4] != MAGIC:
        raise IntegrityError(f"{path}: not a checkpoint archive")
    body, (crc,) = blob[4:-4], struct.unpack("<I", blob[-4:])
    if zlib.crc32(body) != crc:
        raise IntegrityError(f"{path}: archive CRC mismatch")
    try:
        return _parse_body(body, path)
    except (struct.error, IndexError, UnicodeDecodeError) as exc:
        raise IntegrityError(f"{path}: truncated or malformed archive: {exc}") from exc


def _parse_body(body: bytes, path: str):
    off = 0

    def take(n: int) -> bytes:
        nonlocal off
        if off + n > len(body):
            raise IntegrityError(f"{path}: truncated archive")
        chunk = body[off : off + n]
        off += n
        return chunk

    (version,) = struct.unpack("<H", take(2))
    if version != VERSION:
        raise IntegrityError(f"{path}: unsupported checkpoint version {version}")
    blobs = []
    for _ in range(2):
        (n,) = struct.unpack("<I", take(4))
        raw = take(n)
        blobs.append(json.loads(raw.decode()) if raw else None)
    (count,) = struct.unpack("<I", take(4))
    params: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2))
        name = take(name_len).decode()
        if name in params:
            raise IntegrityError(f"{path}: duplicate entry name {name!r}")
        (ndim,) = struct.unpack("<B", take(1))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        n_elem = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        data = take(4 * n_elem)
        params[name] = np.frombuffer(data, dtype="<f4").reshape(shape).copy()
    if off != len(body):
        raise IntegrityError(f"{path}: {len(body) - off} trailing bytes in archive")
    return params, blobs[0], blobs[1]
