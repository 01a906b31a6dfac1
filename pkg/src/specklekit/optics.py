"""Coded-mask generation and speckle reference rendering.

A binary phase mask modulates a plane wave; near-field propagation turns the
mask into a high-contrast intensity pattern on the detector. Two propagation
discretizations are provided:

* ``exact``: discrete convolution with the sampled free-space chirp kernel,
  evaluated with zero-padded FFTs. This is term-for-term identical to a
  direct quadrature sum of the diffraction integral over the sampled field,
  which makes it the verifiable reference semantics. At coarse sampling the
  chirp kernel aliases, so this path is not unitary.
* ``spectral``: multiplication by the analytic Fresnel transfer function on
  the unpadded grid, i.e. exact propagation of the periodic band-limited
  field. Unitary and cyclic-shift equivariant; this is what the renderer
  uses so that full-frame speckle has uniform statistics and no edge damage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import fft, ifft, next_fast_len

from .errors import ParameterError
from .grid import ComplexField2D, Image2D, SeedContext, blur_array


@dataclass(frozen=True)
class OpticsConfig:
    """Plane-wave and mask parameters for reference rendering.

    The defaults give strong near-field diffraction contrast: 0.06 nm
    wavelength, 0.3 m mask-to-detector distance, base amplitude 0.7 with a
    +0.3 amplitude step and a pi phase step where the mask is open, and a
    3-pixel detector blur.
    """

    wavelength: float = 0.06e-9
    distance: float = 0.3
    base_amplitude: float = 0.7
    amplitude_step: float = 0.3
    mask_phase: float = math.pi
    detector_blur_px: int = 3

    def __post_init__(self):
        if not (self.wavelength > 0 and self.distance > 0):
            raise ParameterError("wavelength and distance must be positive")
        if not (self.base_amplitude > 0):
            raise ParameterError("base_amplitude must be positive")
        if self.amplitude_step < 0:
            raise ParameterError("amplitude_step must be non-negative")
        if self.detector_blur_px % 2 == 0 or self.detector_blur_px < 1:
            raise ParameterError("detector_blur_px must be odd and >= 1")


@dataclass(frozen=True)
class CodedMask:
    """Binary pattern on a coarse grid, block-upsampled by the pitch.

    coarse is the (total_size/pitch)^2 grid of 0/1 cells; pattern is the
    full-resolution 0/1 raster, constant over each pitch x pitch block.
    """

    coarse: np.ndarray
    pitch_px: int
    pixel_pitch: float

    def __post_init__(self):
        c = np.asarray(self.coarse)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ParameterError("coarse grid must be square")
        if not np.isin(c, (0, 1)).all():
            raise ParameterError("coarse grid must be binary")
        if self.pitch_px < 1:
            raise ParameterError("pitch must be >= 1")
        cells = c.size
        if cells % 2 == 0 and int(c.sum()) != cells // 2:
            raise ParameterError("an even-cell coarse grid must be exactly half ones")
        c = np.ascontiguousarray(c.astype(np.float64))
        c.flags.writeable = False
        object.__setattr__(self, "coarse", c)

    @property
    def total_size(self) -> int:
        return self.coarse.shape[0] * self.pitch_px

    @property
    def pattern(self) -> Image2D:
        full = np.repeat(np.repeat(self.coarse, self.pitch_px, axis=0), self.pitch_px, axis=1)
        return Image2D(full, self.pixel_pitch)


def generate_coded_mask(
    total_px: int,
    pitch_px: int,
    seed: SeedContext,
    pixel_pitch: float = 0.65e-6,
) -> CodedMask:
    """Random binary mask: exactly half the coarse cells are 1.

    The coarse grid is a seeded random permutation of a half-ones vector,
    then block-upsampled by the pitch with no interpolation.
    """
    if pitch_px < 1 or total_px % pitch_px != 0:
        raise ParameterError(f"pitch {pitch_px} must divide total size {total_px}")
    m = total_px // pitch_px
    cells = m * m
    if cells % 2 != 0:
        raise ParameterError(f"coarse grid has an odd cell count ({cells}); cannot split half/half")
    flat = np.zeros(cells, dtype=np.float64)
    flat[: cells // 2] = 1.0
    coarse = seed.rng("coded-mask").permutation(flat).reshape(m, m)
    return CodedMask(coarse, pitch_px, pixel_pitch)


def _conv1d_same(a: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    """Exact linear convolution along one axis, cropped to the input length."""
    n = a.shape[axis]
    size = next_fast_len(n + len(kernel) - 1)
    shape = [1, 1]
    shape[axis] = size
    fa = fft(a, size, axis=axis)
    fk = fft(kernel, size).reshape(shape)
    full = ifft(fa * fk, size, axis=axis)
    start = (len(kernel) - 1) // 2
    index = [slice(None), slice(None)]
    index[axis] = slice(start, start + n)
    return full[tuple(index)]


def fresnel_propagate(
    field: ComplexField2D,
    wavelength: float,
    distance: float,
    pixel_pitch: float,
    method: str = "exact",
) -> ComplexField2D:
    """Near-field propagation of a sampled complex field.

    ``exact`` convolves the samples with the chirp kernel
    exp(j*k*((x-x0)^2+(y-y0)^2)/(2d)) scaled by exp(j*k*d)/(j*lambda*d) times
    the pixel area. The kernel separates per axis, so the convolution runs as
    two 1D FFT convolutions, each zero-padded beyond twice the linear size
    and cropped back; the result equals the direct double sum to rounding.

    ``spectral`` multiplies the field's DFT by the analytic transfer function
    exp(j*k*d) * exp(-j*pi*lambda*d*f^2): exact, unitary propagation of the
    periodic band-limited interpolant.
    """
    if distance <= 0:
        raise ParameterError("propagation distance must be positive")
    if wavelength <= 0 or pixel_pitch <= 0:
        raise ParameterError("wavelength and pixel_pitch must be positive")
    k = 2 * np.pi / wavelength
    a = field.data
    h, w = a.shape
    if method == "exact":
        beta = k * pixel_pitch**2 / (2 * distance)
        mx = np.arange(-(w - 1), w, dtype=np.float64)
        my = np.arange(-(h - 1), h, dtype=np.float64)
        out = _conv1d_same(a, np.exp(1j * beta * mx * mx), axis=1)
        out = _conv1d_same(out, np.exp(1j * beta * my * my), axis=0)
        prefactor = np.exp(1j * k * distance) / (1j * wavelength * distance) * pixel_pitch**2
        return ComplexField2D(out * prefactor)
    if method == "spectral":
        fx = np.fft.fftfreq(w, pixel_pitch)[None, :]
        fy = np.fft.fftfreq(h, pixel_pitch)[:, None]
        transfer = np.exp(1j * k * distance) * np.exp(
            -1j * np.pi * wavelength * distance * (fx * fx + fy * fy)
        )
        return ComplexField2D(np.fft.ifft2(np.fft.fft2(a) * transfer))
    raise ParameterError(f"unknown propagation method {method!r}")


def render_reference(
    mask: CodedMask,
    cfg: OpticsConfig = OpticsConfig(),
    pixel_pitch: float | None = None,
) -> Image2D:
    """Speckle reference image for a coded mask.

    Builds the entrance field (A + step*R) * exp(j*phase*R), propagates it
    (spectral method, so a uniform mask gives a uniform image and the
    pattern statistics are translation invariant), takes the squared
    modulus, and applies the detector blur.
    """
    pattern = mask.pattern
    if pattern.width < 64 or pattern.height < 64:
        raise ParameterError("mask pattern must be at least 64x64")
    pitch = mask.pixel_pitch if pixel_pitch is None else pixel_pitch
    r = pattern.data
    entrance = (cfg.base_amplitude + cfg.amplitude_step * r) * np.exp(1j * cfg.mask_phase * r)
    propagated = fresnel_propagate(
        ComplexField2D(entrance), cfg.wavelength, cfg.distance, pitch, method="spectral"
    )
    intensity = np.abs(propagated.data) ** 2
    return Image2D(blur_array(intensity, cfg.detector_blur_px), pitch)
