"""Raster types and resampling/filtering/gradient primitives.

Everything here is pure: identical inputs give bit-identical outputs, arrays
are frozen after construction, and no operation keeps hidden state.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ParameterError

DEFAULT_PIXEL_PITCH = 0.65e-6  # meters per detector pixel


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def _require_finite(a: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ParameterError(f"{name} contains non-finite samples")


@dataclass(frozen=True)
class Image2D:
    """Real-valued raster with a physical pixel pitch.

    data is (height, width) float64, row-major. Values may be intensity,
    phase in radians, or dimensionless transmission; the pitch is meters
    per pixel.
    """

    data: np.ndarray
    pixel_pitch: float = DEFAULT_PIXEL_PITCH

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ParameterError(f"Image2D needs a 2D array, got shape {a.shape}")
        _require_finite(a, "Image2D.data")
        if not (self.pixel_pitch > 0):
            raise ParameterError("pixel_pitch must be positive")
        object.__setattr__(self, "data", _freeze(a))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class ComplexField2D:
    """Complex amplitude samples on a regular grid, (height, width)."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.complex128)
        if a.ndim != 2:
            raise ParameterError(f"ComplexField2D needs a 2D array, got shape {a.shape}")
        if not (np.all(np.isfinite(a.real)) and np.all(np.isfinite(a.imag))):
            raise ParameterError("ComplexField2D.data contains non-finite samples")
        object.__setattr__(self, "data", _freeze(a))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True)
class VectorField2D:
    """Per-pixel displacement (dx, dy) in detector-pixel units."""

    dx: np.ndarray
    dy: np.ndarray

    def __post_init__(self):
        dx = np.asarray(self.dx, dtype=np.float64)
        dy = np.asarray(self.dy, dtype=np.float64)
        if dx.ndim != 2 or dx.shape != dy.shape:
            raise ParameterError("dx and dy must be 2D arrays of identical shape")
        _require_finite(dx, "VectorField2D.dx")
        _require_finite(dy, "VectorField2D.dy")
        object.__setattr__(self, "dx", _freeze(dx))
        object.__setattr__(self, "dy", _freeze(dy))

    @property
    def width(self) -> int:
        return self.dx.shape[1]

    @property
    def height(self) -> int:
        return self.dx.shape[0]

    @classmethod
    def zeros(cls, width: int, height: int) -> "VectorField2D":
        return cls(np.zeros((height, width)), np.zeros((height, width)))


@dataclass(frozen=True)
class PyramidStack:
    """Multi-resolution stack; each level halves width and height (floor)."""

    levels: tuple

    def __post_init__(self):
        levels = tuple(self.levels)
        if len(levels) < 2:
            raise ParameterError("PyramidStack needs at least 2 levels")
        for coarse, fine in zip(levels[1:], levels[:-1]):
            if coarse.width != fine.width // 2 or coarse.height != fine.height // 2:
                raise ParameterError("each pyramid level must have floor(previous/2) dims")
        object.__setattr__(self, "levels", levels)

    @property
    def max_level(self) -> int:
        return len(self.levels)

    @classmethod
    def build(cls, img: Image2D, num_levels: int) -> "PyramidStack":
        if num_levels < 2:
            raise ParameterError("num_levels must be >= 2")
        levels = [img]
        for _ in range(num_levels - 1):
            levels.append(downsample_by_2(levels[-1]))
        return cls(tuple(levels))


@dataclass(frozen=True)
class SeedContext:
    """Deterministic per-consumer random streams derived from one master seed.

    The same (master_seed, label) pair always produces the same byte stream,
    independent of platform or call order.
    """

    master_seed: int
    label: str = ""

    def _entropy(self, label: str) -> list:
        tag = f"{self.label}/{label}" if self.label else label
        digest = hashlib.sha256(tag.encode("utf-8")).digest()
        words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
        return [self.master_seed & 0xFFFFFFFFFFFFFFFF, *words]

    def rng(self, label: str) -> np.random.Generator:
        """Random generator for one named consumer."""
        return np.random.default_rng(np.random.SeedSequence(self._entropy(label)))

    def child(self, label: str) -> "SeedContext":
        """Sub-context whose streams are disjoint from the parent's."""
        sub = f"{self.label}/{label}" if self.label else label
        return SeedContext(self.master_seed, sub)


def gaussian_blur(img: Image2D, kernel_px: int) -> Image2D:
    """Separable Gaussian blur with sigma = kernel_px/3.

    The kernel is truncated at half-width kernel_px and normalized to unit
    sum; boundaries are handled by reflection, which preserves the image mean
    exactly. kernel_px = 1 is the identity.
    """
    if kernel_px % 2 == 0 or kernel_px < 1:
        raise ParameterError(f"kernel_px must be odd and >= 1, got {kernel_px}")
    if kernel_px >= min(img.width, img.height):
        raise ParameterError(
            f"kernel_px {kernel_px} too large for {img.width}x{img.height} image"
        )
    return Image2D(blur_array(img.data, kernel_px), img.pixel_pitch)


def blur_array(a: np.ndarray, kernel_px: int) -> np.ndarray:
    """Array-level Gaussian blur used by gaussian_blur and the generators."""
    if kernel_px == 1:
        return a.copy()
    sigma = kernel_px / 3.0
    x = np.arange(-kernel_px, kernel_px + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    k /= k.sum()
    out = ndimage.correlate1d(a, k, axis=0, mode="reflect")
    return ndimage.correlate1d(out, k, axis=1, mode="reflect")


def downsample_by_2(img: Image2D) -> Image2D:
    """Halve both dimensions; each output pixel averages its 2x2 source block."""
    h, w = img.data.shape
    if h < 2 or w < 2:
        raise ParameterError("image too small to downsample")
    h2, w2 = h // 2, w // 2
    blocks = img.data[: 2 * h2, : 2 * w2].reshape(h2, 2, w2, 2)
    return Image2D(blocks.mean(axis=(1, 3)), img.pixel_pitch * 2)


def bilinear_map(a: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear interpolation of `a` at (xs, ys); coordinates clamp to borders."""
    h, w = a.shape
    x = np.clip(xs, 0.0, w - 1.0)
    y = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(x).astype(np.intp)
    y0 = np.floor(y).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = x - x0
    fy = y - y0
    return (
        a[y0, x0] * (1 - fx) * (1 - fy)
        + a[y0, x1] * fx * (1 - fy)
        + a[y1, x0] * (1 - fx) * fy
        + a[y1, x1] * fx * fy
    )


def bilinear_sample(img: Image2D, x: float, y: float) -> float:
    """Sample one point with bilinear interpolation and clamped coordinates."""
    return float(bilinear_map(img.data, np.asarray([x], float), np.asarray([y], float))[0])


def finite_gradient(img: Image2D) -> tuple:
    """(d/dx, d/dy) in input units per pixel.

    Central differences on the interior, one-sided at the borders.
    """
    if img.width < 3 or img.height < 3:
        raise ParameterError("finite_gradient needs at least a 3x3 image")
    gx = np.gradient(img.data, axis=1, edge_order=1)
    gy = np.gradient(img.data, axis=0, edge_order=1)
    return Image2D(gx, img.pixel_pitch), Image2D(gy, img.pixel_pitch)
