"""Minimal reader/writer for the SPGRID1 grid file format.

Independent implementation of the documented format: 8-byte magic, a
fixed-order ASCII header terminated by an ``end`` line, then raw
little-endian float32 planes (row-major, channel-major).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

MAGIC = b"SPGRID1\n"
FIELDS = (
    "width",
    "height",
    "channels",
    "dtype",
    "byteorder",
    "layout",
    "pixel_pitch_m",
    "semantic",
)


class SpgridError(RuntimeError):
    pass


def read(path) -> tuple[dict, np.ndarray]:
    blob = Path(path).read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        raise SpgridError(f"{path}: bad magic {blob[:8]!r}")
    cursor = len(MAGIC)
    meta = {}
    for key in FIELDS:
        newline = blob.find(b"\n", cursor)
        if newline < 0:
            raise SpgridError(f"{path}: truncated header at {key}")
        name, _, value = blob[cursor:newline].decode("ascii").partition("=")
        if name != key:
            raise SpgridError(f"{path}: expected field {key}, found {name}")
        meta[key] = value
        cursor = newline + 1
    newline = blob.find(b"\n", cursor)
    if blob[cursor:newline] != b"end":
        raise SpgridError(f"{path}: missing end marker")
    cursor = newline + 1
    if meta["dtype"] != "f32" or meta["byteorder"] != "little":
        raise SpgridError(f"{path}: unsupported payload encoding")
    w, h, c = int(meta["width"]), int(meta["height"]), int(meta["channels"])
    expected = w * h * c * 4
    payload = blob[cursor:]
    if len(payload) != expected:
        raise SpgridError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    data = np.frombuffer(payload, dtype="<f4").reshape(c, h, w)
    meta["width"], meta["height"], meta["channels"] = w, h, c
    meta["pixel_pitch_m"] = float(meta["pixel_pitch_m"])
    return meta, data


def write(path, data: np.ndarray, semantic: str, pixel_pitch_m: float) -> None:
    a = np.asarray(data, dtype="<f4")
    if a.ndim == 2:
        a = a[None]
    c, h, w = a.shape
    lines = [
        f"width={w}",
        f"height={h}",
        f"channels={c}",
        "dtype=f32",
        "byteorder=little",
        "layout=row-major",
        f"pixel_pitch_m={pixel_pitch_m!r}",
        f"semantic={semantic}",
        "end",
    ]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        fh.write(np.ascontiguousarray(a).tobytes())
