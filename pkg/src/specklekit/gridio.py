"""Self-describing on-disk grid format (SPGRID1).

Layout: the 8-byte magic ``SPGRID1\\n``, a fixed-order ASCII header of
``key=value`` lines terminated by an ``end`` line, then the raw payload of
width*height*channels little-endian float32 samples, row-major, one channel
plane after another. The format is deliberately trivial so other languages
can read and write it with a few dozen lines of code.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GridHeaderError, GridMagicError, GridPayloadError, ParameterError
from .grid import Image2D

MAGIC = b"SPGRID1\n"
SEMANTICS = ("intensity", "phase_rad", "transmission", "disp_px_x", "disp_px_y", "feature")
_FIELD_ORDER = (
    "width",
    "height",
    "channels",
    "dtype",
    "byteorder",
    "layout",
    "pixel_pitch_m",
    "semantic",
)


@dataclass(frozen=True)
class GridHeader:
    width: int
    height: int
    channels: int
    pixel_pitch_m: float
    semantic: str
    dtype: str = "f32"
    byteorder: str = "little"
    layout: str = "row-major"

    def __post_init__(self):
        if self.width < 1 or self.height < 1 or self.channels < 1:
            raise ParameterError("grid dimensions and channels must be >= 1")
        if self.semantic not in SEMANTICS:
            raise ParameterError(f"semantic must be one of {SEMANTICS}, got {self.semantic!r}")
        if self.dtype != "f32":
            raise ParameterError("only dtype f32 is supported")
        if self.byteorder != "little" or self.layout != "row-major":
            raise ParameterError("byteorder must be 'little' and layout 'row-major'")
        if not (self.pixel_pitch_m > 0):
            raise ParameterError("pixel_pitch_m must be positive")

    @property
    def payload_bytes(self) -> int:
        return self.width * self.height * self.channels * 4


def _encode_header(header: GridHeader) -> bytes:
    values = {
        "width": str(header.width),
        "height": str(header.height),
        "channels": str(header.channels),
        "dtype": header.dtype,
        "byteorder": header.byteorder,
        "layout": header.layout,
        "pixel_pitch_m": repr(header.pixel_pitch_m),
        "semantic": header.semantic,
    }
    lines = [f"{key}={values[key]}" for key in _FIELD_ORDER]
    return MAGIC + ("\n".join(lines) + "\nend\n").encode("ascii")


def write_grid(path, header: GridHeader, payload: np.ndarray) -> None:
    """Write one grid file; payload shape must match the header."""
    a = np.asarray(payload)
    if a.ndim == 2:
        a = a[None, :, :]
    if a.shape != (header.channels, header.height, header.width):
        raise ParameterError(
            f"payload shape {a.shape} does not match header "
            f"({header.channels}, {header.height}, {header.width})"
        )
    data = np.ascontiguousarray(a, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_encode_header(header))
        fh.write(data.tobytes())


def read_grid(path) -> tuple[GridHeader, np.ndarray]:
    """Read one grid file back as (header, float32 array of shape (C, H, W))."""
    blob = Path(path).read_bytes()
    if blob[: len(MAGIC)] != MAGIC:
        found = blob[: len(MAGIC)]
        raise GridMagicError(f"bad magic {found!r}; expected {MAGIC!r}")
    cursor = len(MAGIC)
    fields = {}
    for key in _FIELD_ORDER:
        newline = blob.find(b"\n", cursor)
        if newline < 0:
            raise GridHeaderError(f"header truncated while reading field {key!r}")
        line = blob[cursor:newline].decode("ascii", errors="replace")
        cursor = newline + 1
        name, sep, value = line.partition("=")
        if not sep or name != key:
            raise GridHeaderError(f"expected field {key!r}, found line {line!r}")
        fields[key] = value
    newline = blob.find(b"\n", cursor)
    if newline < 0 or blob[cursor:newline] != b"end":
        raise GridHeaderError("missing 'end' terminator after header fields")
    cursor = newline + 1

    try:
        header = GridHeader(
            width=int(fields["width"]),
            height=int(fields["height"]),
            channels=int(fields["channels"]),
            pixel_pitch_m=float(fields["pixel_pitch_m"]),
            semantic=fields["semantic"],
            dtype=fields["dtype"],
            byteorder=fields["byteorder"],
            layout=fields["layout"],
        )
    except (ValueError, ParameterError) as exc:
        raise GridHeaderError(f"invalid header values: {exc}") from exc

    payload = blob[cursor:]
    if len(payload) != header.payload_bytes:
        raise GridPayloadError(header.payload_bytes, len(payload), cursor)
    array = np.frombuffer(payload, dtype="<f4").reshape(
        header.channels, header.height, header.width
    )
    return header, array


def write_image(path, img: Image2D, semantic: str) -> None:
    header = GridHeader(
        width=img.width,
        height=img.height,
        channels=1,
        pixel_pitch_m=img.pixel_pitch,
        semantic=semantic,
    )
    write_grid(path, header, img.data.astype("<f4"))


def read_image(path) -> Image2D:
    header, payload = read_grid(path)
    if header.channels != 1:
        raise GridHeaderError(f"expected a single-channel grid, got {header.channels}")
    return Image2D(payload[0].astype(np.float64), header.pixel_pitch_m)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
