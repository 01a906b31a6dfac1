"""Ground-truth sample synthesis and the forward imaging model.

A sample is described by a phase map (radians), a transmission map in
(0, 1], and the displacement field the phase induces on the speckle
pattern. The forward model warps the reference by the displacement and
scales it by the transmission:

    sample(x, y) = T(x, y) * ref(x - dx(x, y), y - dy(x, y))

with dx = c * dphase/dx, dy = c * dphase/dy and
c = wavelength * (camera_dist - sample_dist) / (2*pi * pixel_pitch^2),
all in detector-pixel units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .grid import Image2D, SeedContext, VectorField2D, bilinear_map, blur_array, finite_gradient
from .optics import OpticsConfig, generate_coded_mask, render_reference


@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the random sample generators.

    Phase structure: blurred normalized noise inside a smooth random blob
    contour, scaled by a per-sample factor drawn from phase_scale_range.
    Transmission: 1 - depth * structure with depth drawn from
    transmission_depth_range; with probability correlated_fraction the
    structure is shared with the phase map.
    """

    noise_blur_px: int = 10
    phase_scale_range: tuple = (math.pi, 20 * math.pi)
    transmission_depth_range: tuple = (0.02, 0.2)
    correlated_fraction: float = 0.4
    mask_to_sample: float = 0.0
    mask_to_camera: float = 0.3
    wavelength: float = 0.06e-9
    pixel_pitch: float = 0.65e-6
    contour_points: int = 8
    contour_wobble: float = 0.35
    noise_sigma: float = 0.0

    def __post_init__(self):
        lo, hi = self.phase_scale_range
        if not (0 <= lo <= hi):
            raise ParameterError("phase_scale_range must be 0 <= low <= high")
        tlo, thi = self.transmission_depth_range
        if not (0 <= tlo <= thi < 1):
            raise ParameterError("transmission_depth_range must lie in [0, 1)")
        if not (0 <= self.correlated_fraction <= 1):
            raise ParameterError("correlated_fraction must be in [0, 1]")
        if not (self.mask_to_camera > self.mask_to_sample >= 0):
            raise ParameterError("need mask_to_camera > mask_to_sample >= 0")
        if self.noise_blur_px < 1:
            raise ParameterError("noise_blur_px must be >= 1")
        if not (3 <= self.contour_points <= 64):
            raise ParameterError("contour_points must be in [3, 64]")
        if not (0 <= self.contour_wobble < 1):
            raise ParameterError("contour_wobble must be in [0, 1)")
        if self.noise_sigma < 0:
            raise ParameterError("noise_sigma must be non-negative")

    @property
    def displacement_coefficient(self) -> float:
        """Pixels of speckle shift per (radian/pixel) of phase gradient."""
        dist = self.mask_to_camera - self.mask_to_sample
        return self.wavelength * dist / (2 * math.pi * self.pixel_pitch**2)


@dataclass(frozen=True)
class SampleTruth:
    """Ground truth for one synthetic sample."""

    phase: Image2D
    transmission: Image2D
    displacement: VectorField2D
    scale_vp: float
    scale_vt: float
    correlated: bool

    def __post_init__(self):
        t = self.transmission.data
        if t.min() <= 0 or t.max() > 1 + 1e-12:
            raise ParameterError("transmission must lie in (0, 1]")
        if (
            self.phase.data.shape != t.shape
            or self.displacement.dx.shape != t.shape
        ):
            raise ParameterError("truth fields must share one shape")


def _bezier_contour(seed: SeedContext, cfg: SynthConfig, width: int, height: int) -> np.ndarray:
    """Closed polygon (N, 2) through randomly perturbed circular control points.

    Control points sit on a circle of random radius in [0.2, 0.4]*min(dim)
    with radial perturbations up to contour_wobble; a composite cubic Bezier
    (Catmull-Rom tangents) interpolates smoothly through them.
    """
    rng = seed.rng("contour")
    k = cfg.contour_points
    radius = rng.uniform(0.2, 0.4) * min(width, height)
    angles = 2 * np.pi * np.arange(k) / k
    radii = radius * (1.0 + cfg.contour_wobble * rng.uniform(-1.0, 1.0, k))
    cx, cy = width / 2.0, height / 2.0
    px = cx + radii * np.cos(angles)
    py = cy + radii * np.sin(angles)
    pts = np.stack([px, py], axis=1)

    samples_per_seg = 32
    t = np.linspace(0.0, 1.0, samples_per_seg, endpoint=False)[:, None]
    poly = []
    for i in range(k):
        p0 = pts[(i - 1) % k]
        p1 = pts[i]
        p2 = pts[(i + 1) % k]
        p3 = pts[(i + 2) % k]
        c1 = p1 + (p2 - p0) / 6.0
        c2 = p2 - (p3 - p1) / 6.0
        seg = (
            (1 - t) ** 3 * p1
            + 3 * (1 - t) ** 2 * t * c1
            + 3 * (1 - t) * t**2 * c2
            + t**3 * p2
        )
        poly.append(seg)
    return np.concatenate(poly, axis=0)


def _fill_polygon(poly: np.ndarray, width: int, height: int) -> np.ndarray:
    """Even-odd scanline rasterization of a closed polygon onto pixel centers."""
    out = np.zeros((height, width), dtype=np.float64)
    x1 = poly[:, 0]
    y1 = poly[:, 1]
    x2 = np.roll(x1, -1)
    y2 = np.roll(y1, -1)
    keep = y1 != y2
    x1, y1, x2, y2 = x1[keep], y1[keep], x2[keep], y2[keep]
    for row in range(height):
        y = float(row)
        crosses = ((y1 <= y) & (y < y2)) | ((y2 <= y) & (y < y1))
        if not crosses.any():
            continue
        xs = x1[crosses] + (y - y1[crosses]) * (x2[crosses] - x1[crosses]) / (
            y2[crosses] - y1[crosses]
        )
        xs = np.sort(xs)
        for a, b in zip(xs[0::2], xs[1::2]):
            lo = max(0, int(np.ceil(a)))
            hi = min(width - 1, int(np.floor(b)))
            if hi >= lo:
                out[row, lo : hi + 1] = 1.0
    return out


def gen_shape_mask(width: int, height: int, seed: SeedContext, cfg: SynthConfig) -> Image2D:
    """Soft-edged random blob support in [0, 1]."""
    if width < 64 or height < 64:
        raise ParameterError("shape mask needs at least 64x64")
    poly = _bezier_contour(seed, cfg, width, height)
    filled = _fill_polygon(poly, width, height)
    return Image2D(blur_array(filled, 3), cfg.pixel_pitch)


def _structure(width: int, height: int, seed: SeedContext, cfg: SynthConfig) -> np.ndarray:
    """Blurred normalized noise times the blob support; values in [0, 1]."""
    noise = seed.rng("noise").normal(0.5, 0.15, (height, width))
    lo, hi = noise.min(), noise.max()
    if hi > lo:
        noise = (noise - lo) / (hi - lo)
    else:
        noise = np.zeros_like(noise)
    smooth = blur_array(noise, cfg.noise_blur_px)
    return smooth * gen_shape_mask(width, height, seed, cfg).data


def gen_phase_map(
    width: int, height: int, seed: SeedContext, cfg: SynthConfig
) -> tuple[Image2D, float]:
    """Random sample phase map (radians) and its drawn scale factor."""
    if width < 64 or height < 64:
        raise ParameterError("phase map needs at least 64x64")
    struct = _structure(width, height, seed.child("phase"), cfg)
    vp = float(seed.rng("phase-scale").uniform(*cfg.phase_scale_range))
    return Image2D(vp * struct, cfg.pixel_pitch), vp


def gen_transmission_map(
    width: int,
    height: int,
    seed: SeedContext,
    cfg: SynthConfig,
    phase_map: Image2D | None = None,
) -> tuple[Image2D, float, bool]:
    """Random transmission map T = 1 - depth * structure, T in [1 - depth, 1].

    With probability correlated_fraction (and a phase map to borrow from),
    the structure is the phase map renormalized to [0, 1]; otherwise an
    independent structure is drawn by the same recipe.
    """
    if width < 64 or height < 64:
        raise ParameterError("transmission map needs at least 64x64")
    correlated = bool(
        seed.rng("transmission-mode").uniform() < cfg.correlated_fraction
    ) and phase_map is not None
    if correlated:
        peak = phase_map.data.max()
        struct = phase_map.data / peak if peak > 0 else np.zeros_like(phase_map.data)
    else:
        struct = _structure(width, height, seed.child("transmission"), cfg)
    vt = float(seed.rng("transmission-scale").uniform(*cfg.transmission_depth_range))
    return Image2D(1.0 - vt * struct, cfg.pixel_pitch), vt, correlated


def displacement_from_phase(phase: Image2D, cfg: SynthConfig) -> VectorField2D:
    """Speckle displacement (pixels) induced by a phase map."""
    gx, gy = finite_gradient(phase)
    c = cfg.displacement_coefficient
    return VectorField2D(c * gx.data, c * gy.data)


def warp_apply(ref: Image2D, truth: SampleTruth) -> Image2D:
    """Forward model: transmission-scaled, displacement-warped reference."""
    if (ref.height, ref.width) != truth.transmission.data.shape:
        raise ParameterError("reference and truth dimensions differ")
    h, w = ref.data.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    warped = bilinear_map(ref.data, xs - truth.displacement.dx, ys - truth.displacement.dy)
    return Image2D(truth.transmission.data * warped, ref.pixel_pitch)


def make_truth(width: int, height: int, seed: SeedContext, cfg: SynthConfig) -> SampleTruth:
    """Draw one complete ground-truth description."""
    phase, vp = gen_phase_map(width, height, seed, cfg)
    transmission, vt, correlated = gen_transmission_map(width, height, seed, cfg, phase)
    disp = displacement_from_phase(phase, cfg)
    return SampleTruth(phase, transmission, disp, vp, vt, correlated)


def make_pair(
    mask_seed: SeedContext,
    sample_seed: SeedContext,
    cfg: SynthConfig = SynthConfig(),
    optics: OpticsConfig = OpticsConfig(),
    size: int = 512,
    mask_pitch_px: int = 8,
) -> tuple[Image2D, Image2D, SampleTruth]:
    """One (reference, sample, truth) triple.

    The sample equals warp_apply(reference, truth) exactly when noise_sigma
    is zero; otherwise independent Gaussian noise is added to both images
    afterwards (drawn from the sample seed, so pairs stay reproducible).
    """
    mask = generate_coded_mask(size, mask_pitch_px, mask_seed, cfg.pixel_pitch)
    ref = render_reference(mask, optics, cfg.pixel_pitch)
    truth = make_truth(size, size, sample_seed, cfg)
    sample = warp_apply(ref, truth)
    if cfg.noise_sigma > 0:
        rng = sample_seed.rng("image-noise")
        ref = Image2D(ref.data + rng.normal(0, cfg.noise_sigma, ref.data.shape), ref.pixel_pitch)
        sample = Image2D(
            sample.data + rng.normal(0, cfg.noise_sigma, sample.data.shape), sample.pixel_pitch
        )
    return ref, sample, truth
