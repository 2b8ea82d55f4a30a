"""Deterministic synthetic video data and bit-exact file I/O.

Clips are a textured static background with a square translating according
to the class id (horizontal, vertical, diagonal, square-orbit, static). All
placement is integer arithmetic and all pixel values come from a 64-bit
integer hash, so identical seeds give bit-identical datasets on any
platform.

The VTRF file format stores one float32 [C, L, H, W] tensor little-endian
with a trailing CRC32 of the payload.
"""
from __future__ import annotations

import os
import struct
import zlib

import numpy as np

from .errors import ConfigError, IntegrityError

VTRF_MAGIC = b"VTRF"
VTRF_VERSION = 1

MOTION_KINDS = ("horizontal", "vertical", "diagonal", "orbit", "static")


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def _hash(*parts: int) -> int:
    h = 0x8C2F1B4D5E6A7983
    for p in parts:
        h = _splitmix64(h ^ (p & 0xFFFFFFFFFFFFFFFF))
    return h


def motion_kind(class_id: int) -> str:
    return MOTION_KINDS[class_id % len(MOTION_KINDS)]


def _orbit_ring(r: int) -> list[tuple[int, int]]:
    """Integer perimeter of a square of half-size r, walked clockwise."""
    ring = []
    for dx in range(-r, r):
        ring.append((-r, dx))
    for dy in range(-r, r):
        ring.append((dy, r))
    for dx in range(r, -r, -1):
        ring.append((r, dx))
    for dy in range(r, -r, -1):
        ring.append((dy, -r))
    return ring


def gen_clip(seed: int, index: int, class_id: int, L: int, H: int, W: int) -> np.ndarray:
    """One [3, L, H, W] float32 clip in [-1, 1], fully determined by arguments."""
    clip = np.empty((3, L, H, W), dtype=np.float32)

    # static textured background: 8-bit hash value per pixel, scaled to [-0.5, 0.5]
    bg = np.empty((3, H, W), dtype=np.float32)
    for c in range(3):
        for y in range(H):
            for x in range(W):
                bg[c, y, x] = ((_hash(seed, index, 1, c, y, x) & 0xFF) / 255.0 - 0.5)
    clip[:] = bg[:, None, :, :]

    size = max(2, min(H, W) // 4)
    y0 = _hash(seed, index, 2) % H
    x0 = _hash(seed, index, 3) % W
    speed = 1 + _hash(seed, index, 4) % 2
    color = np.array([0.9 if (_hash(seed, index, 5, c) & 1) else -0.9
                      for c in range(3)], dtype=np.float32)

    kind = motion_kind(class_id)
    r = max(1, min(H, W) // 4)
    ring = _orbit_ring(r)
    for ell in range(L):
        if kind == "horizontal":
            dy, dx = 0, speed * ell
        elif kind == "vertical":
            dy, dx = speed * ell, 0
        elif kind == "diagonal":
            dy, dx = speed * ell, speed * ell
        elif kind == "orbit":
            step = max(1, len(ring) // L)
            dy, dx = ring[(ell * step) % len(ring)]
        else:  # static
            dy, dx = 0, 0
        for i in range(size):
            for j in range(size):
                clip[:, ell, (y0 + dy + i) % H, (x0 + dx + j) % W] = color
    return clip


def gen_moving_shapes(seed: int, count: int, L: int, H: int, W: int,
                      num_classes: int) -> list[tuple[np.ndarray, int]]:
    """Dataset of (video [3, L, H, W] float32, class id) pairs."""
    if min(count, L, H, W) <= 0:
        raise ConfigError("count and clip dimensions must be positive")
    if num_classes < 1:
        raise ConfigError(f"num_classes must be >= 1, got {num_classes}")
    out = []
    for i in range(count):
        class_id = i % num_classes
        out.append((gen_clip(seed, i, class_id, L, H, W), class_id))
    return out


def _atomic_write(path: str, payload: bytes):
    tmp = f"{path}.tmp.{os.getpid()}"
    with open(tmp, "wb") as f:
        f.write(payload)
    os.replace(tmp, path)


def save_video(video: np.ndarray, path: str):
    """Write a [C, L, H, W] float32 tensor as a VTRF file (atomic)."""
    if video.ndim != 4:
        raise ConfigError(f"video must be 4-axis [C, L, H, W], got shape {video.shape}")
    if min(video.shape) <= 0:
        raise ConfigError(f"video dims must be positive, got shape {video.shape}")
    data = np.ascontiguousarray(video, dtype="<f4")
    payload = data.tobytes()
    header = VTRF_MAGIC + struct.pack("<HB4I", VTRF_VERSION, 0, *video.shape)
    _atomic_write(path, header + payload + struct.pack("<I", zlib.crc32(payload)))


def load_video(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        blob = f.read()
    header_len = 4 + struct.calcsize("<HB4I")
    if len(blob) < header_len + 4:
        raise IntegrityError(f"{path}: truncated VTRF file")
    if blob[:4] != VTRF_MAGIC:
        raise IntegrityError(f"{path}: bad magic {blob[:4]!r}")
    version, dtype_code, c, l, h, w = struct.unpack("<HB4I", blob[4:header_len])
    if version != VTRF_VERSION:
        raise IntegrityError(f"{path}: unsupported VTRF version {version}")
    if dtype_code != 0:
        raise IntegrityError(f"{path}: unsupported dtype code {dtype_code}")
    n = c * l * h * w
    payload = blob[header_len : header_len + 4 * n]
    if len(payload) != 4 * n or len(blob) != header_len + 4 * n + 4:
        raise IntegrityError(f"{path}: payload size does not match header dims")
    (crc,) = struct.unpack("<I", blob[header_len + 4 * n :])
    if crc != zlib.crc32(payload):
        raise IntegrityError(f"{path}: payload CRC mismatch")
    return np.frombuffer(payload, dtype="<f4").reshape(c, l, h, w).copy()


def export_ppm_frames(video: np.ndarray, out_dir: str) -> list[str]:
    """Write each frame as binary PPM (P6, maxval 255).

    Values map by round-half-up of (v+1)/2*255, clamped to [0, 255].
    """
    if video.shape[0] != 3:
        raise ConfigError(f"PPM export requires C=3 channels, got C={video.shape[0]}")
    os.makedirs(out_dir, exist_ok=True)
    _, L, H, W = video.shape
    paths = []
    for ell in range(L):
        frame = video[:, ell].astype(np.float64)
        q = np.floor((frame + 1.0) / 2.0 * 255.0 + 0.5)
        q = np.clip(q, 0, 255).astype(np.uint8)
        rgb = np.moveaxis(q, 0, -1)  # [H, W, 3]
        path = os.path.join(out_dir, f"frame_{ell:04d}.ppm")
        _atomic_write(path, f"P6\n{W} {H}\n255\n".encode() + rgb.tobytes())
        paths.append(path)
    return paths


def write_dataset(dataset: list[tuple[np.ndarray, int]], out_dir: str) -> str:
    """Write clips as VTRF files plus a TSV manifest (path, class_id)."""
    os.makedirs(out_dir, exist_ok=True)
    lines = []
    for i, (clip, class_id) in enumerate(dataset):
        name = f"clip_{i:05d}.vtrf"
        save_video(clip, os.path.join(out_dir, name))
        lines.append(f"{name}\t{class_id}\n")
    manifest = os.path.join(out_dir, "manifest.tsv")
    _atomic_write(manifest, ("path\tclass_id\n" + "".join(lines)).encode())
    return manifest


def load_dataset(data_dir: str) -> list[tuple[np.ndarray, int]]:
    manifest = os.path.join(data_dir, "manifest.tsv")
    if not os.path.exists(manifest):
        raise FileNotFoundError(f"no manifest.tsv in {data_dir}")
    out = []
    with open(manifest) as f:
        header = f.readline()
        if header.strip() != "path\tclass_id":
            raise IntegrityError(f"{manifest}: unexpected header {header!r}")
        for line in f:
            name, class_id = line.rstrip("\n").split("\t")
            out.append((load_video(os.path.join(data_dir, name)), int(class_id)))
    return out
