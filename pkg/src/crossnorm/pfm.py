"""Portable FloatMap (PFM) reader and writer.

Layout: magic line ``PF`` (3-channel) or ``Pf`` (1-channel), a ``W H``
dimensions line, a scale line whose sign encodes endianness (negative =
little-endian), then raw 32-bit float scanlines stored bottom-to-top.
Round trips are bitwise lossless for every finite float32 value.
"""

from __future__ import annotations

import numpy as np


class PfmFormatError(ValueError):
    pass


def write_pfm(array, path):
    """Write a (C,H,W) float array, C in {1,3}, as little-endian PFM."""
    arr = np.asarray(array)
    if arr.ndim != 3 or arr.shape[0] not in (1, 3):
        raise PfmFormatError(f"PFM arrays must be (C,H,W) with C in {{1,3}}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise PfmFormatError("PFM payload must be finite")
    arr = arr.astype(np.float32, copy=False)
    c, h, w = arr.shape
    magic = b"PF\n" if c == 3 else b"Pf\n"
    # (C,H,W) -> (H,W,C), bottom row first
    payload = np.ascontiguousarray(arr.transpose(1, 2, 0)[::-1])
    if payload.dtype.byteorder == ">":
        payload = payload.byteswap()
    with open(path, "wb") as f:
        f.write(magic)
        f.write(f"{w} {h}\n".encode("ascii"))
        f.write(b"-1.0\n")
        f.write(payload.tobytes())


def _read_line(f):
    buf = b""
    while True:
        ch = f.read(1)
        if not ch:
            raise PfmFormatError("truncated PFM header")
        if ch == b"\n":
            return buf.decode("ascii", errors="replace")
        buf += ch


def read_pfm(path):
    """Read a PFM file into a (C,H,W) float32 array."""
    with open(path, "rb") as f:
        magic = _read_line(f)
        if magic == "PF":
            channels = 3
        elif magic == "Pf":
            channels = 1
        else:
            raise PfmFormatError(f"bad PFM magic {magic!r}")
        dims = _read_line(f).split()
        if len(dims) != 2:
            raise PfmFormatError(f"bad PFM dimensions line {dims!r}")
        try:
            w, h = int(dims[0]), int(dims[1])
        except ValueError:
            raise PfmFormatError(f"bad PFM dimensions line {dims!r}") from None
        if w <= 0 or h <= 0:
            raise PfmFormatError(f"non-positive PFM dimensions {w}x{h}")
        try:
            scale = float(_read_line(f))
        except ValueError:
            raise PfmFormatError("bad PFM scale line") from None
        if scale >= 0:
            raise PfmFormatError("big-endian PFM (positive scale) is not supported")
        n_bytes = w * h * channels * 4
        raw = f.read(n_bytes)
        if len(raw) != n_bytes:
            raise PfmFormatError(
                f"truncated PFM payload: expected {n_bytes} bytes, got {len(raw)}"
            )
    data = np.frombuffer(raw, dtype="<f4").reshape(h, w, channels)
    # bottom-to-top scanlines -> top-to-bottom, then (H,W,C) -> (C,H,W)
    return np.ascontiguousarray(data[::-1].transpose(2, 0, 1))
