"""Differential-phase conversion, gradient integration, lens metrology,
and the quantitative error report.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .grid import Image2D, VectorField2D

REGIME_LOW_LIMIT = 0.25   # percent; boundaries assign upward
REGIME_MEDIUM_LIMIT = 1.0


@dataclass(frozen=True)
class GeometryConfig:
    """Imaging geometry used to convert pixel displacements to phase slope."""

    wavelength: float = 0.06e-9
    mask_to_sample: float = 0.0
    mask_to_camera: float = 0.628
    pixel_pitch: float = 0.65e-6

    def __post_init__(self):
        if not (self.wavelength > 0 and self.pixel_pitch > 0):
            raise ParameterError("wavelength and pixel_pitch must be positive")
        if not (self.mask_to_camera > self.mask_to_sample >= 0):
            raise ParameterError("need mask_to_camera > mask_to_sample >= 0")

    @property
    def displacement_coefficient(self) -> float:
        """Pixels of speckle displacement per (radian/pixel) of phase slope."""
        dist = self.mask_to_camera - self.mask_to_sample
        return self.wavelength * dist / (2 * math.pi * self.pixel_pitch**2)


def displacement_to_gradient(
    disp: VectorField2D, geom: GeometryConfig = GeometryConfig()
) -> tuple[Image2D, Image2D]:
    """Phase slope (rad/px) along x and y from a displacement field."""
    c = geom.displacement_coefficient
    return (
        Image2D(disp.dx / c, geom.pixel_pitch),
        Image2D(disp.dy / c, geom.pixel_pitch),
    )


def integrate_gradients(gx: Image2D, gy: Image2D) -> Image2D:
    """Least-squares surface from its gradient field, solved in Fourier space.

    The gradients are mirror-extended to twice the size with the sign
    pattern of an even surface extension (x-derivative flips sign under the
    x reflection, and so on), with the one-sided border samples half
    weighted so the extension is exactly the cyclic central difference of
    the extended surface. Dividing by the central-difference frequency
    symbol sin(w) then inverts finite_gradient exactly (up to the Nyquist
    null space); the zero-frequency coefficient is dropped, pinning the
    output mean to 0.
    """
    if gx.data.shape != gy.data.shape:
        raise ParameterError("gradient components must share dimensions")
    h, w = gx.data.shape
    if h < 2 or w < 2:
        raise ParameterError("gradient field too small to integrate")
    gxp = gx.data.copy()
    gxp[:, 0] *= 0.5
    gxp[:, -1] *= 0.5
    gyp = gy.data.copy()
    gyp[0, :] *= 0.5
    gyp[-1, :] *= 0.5
    gx_ext = np.block([[gxp, -gxp[:, ::-1]], [gxp[::-1, :], -gxp[::-1, ::-1]]])
    gy_ext = np.block([[gyp, gyp[:, ::-1]], [-gyp[::-1, :], -gyp[::-1, ::-1]]])

    sx = np.sin(2 * np.pi * np.fft.fftfreq(2 * w))[None, :]
    sy = np.sin(2 * np.pi * np.fft.fftfreq(2 * h))[:, None]
    den = sx * sx + sy * sy
    num = -1j * (sx * np.fft.fft2(gx_ext) + sy * np.fft.fft2(gy_ext))
    live = den > 0
    coef = np.where(live, num, 0.0) / np.where(live, den, 1.0)
    phi = np.real(np.fft.ifft2(coef))[:h, :w]
    return Image2D(phi - phi.mean(), gx.pixel_pitch)


def gradient_curl_rms(gx: Image2D, gy: Image2D) -> float:
    """RMS curl of the gradient field; a diagnostic for non-integrability."""
    curl = np.gradient(gy.data, axis=1) - np.gradient(gx.data, axis=0)
    return float(np.sqrt(np.mean(curl * curl)))


@dataclass(frozen=True)
class LensFit:
    """Best-fit separable paraboloid over a circular aperture."""

    center_x: float
    center_y: float
    curvature_x: float
    curvature_y: float
    offset: float
    aperture_radius_px: float
    residual: Image2D
    residual_rms: float
    aperture_mask: np.ndarray


def fit_paraboloid(
    phase: Image2D,
    aperture_radius_px: float,
    center_hint: tuple[float, float] | None = None,
) -> LensFit:
    """Least-squares fit of a*(x-x0)^2 + b*(y-y0)^2 + c over an aperture.

    The fit runs in the equivalent linear basis {1, x, y, x^2, y^2}; the
    peak position follows by completing the square, which is the exact
    minimizer of the same objective. A flat input degenerates to a = b = 0
    with c the aperture mean and the center at the hint.
    """
    h, w = phase.data.shape
    cx, cy = center_hint if center_hint is not None else ((w - 1) / 2.0, (h - 1) / 2.0)
    r = float(aperture_radius_px)
    if r <= 1:
        raise ParameterError("aperture radius must exceed 1 px")
    if cx - r < -0.5 or cx + r > w - 0.5 or cy - r < -0.5 or cy + r > h - 0.5:
        raise ParameterError("aperture extends beyond the image")

    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    mask = (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
    u = (xs[mask] - cx) / r
    v = (ys[mask] - cy) / r
    z = phase.data[mask]
    basis = np.stack([np.ones_like(u), u, v, u * u, v * v], axis=1)
    gram = basis.T @ basis
    rhs = basis.T @ z
    coef = np.linalg.solve(gram, rhs)
    a0, a1, a2, a3, a4 = coef

    scale = max(float(np.abs(z).max()), 1e-30)
    tiny = 1e-12 * scale
    if abs(a3) < tiny:
        a, x0 = 0.0, cx
        a1_used = 0.0
    else:
        a = a3 / (r * r)
        x0 = cx - a1 * r / (2 * a3)
        a1_used = a1
    if abs(a4) < tiny:
        b, y0 = 0.0, cy
        a2_used = 0.0
    else:
        b = a4 / (r * r)
        y0 = cy - a2 * r / (2 * a4)
        a2_used = a2

    model = np.zeros_like(phase.data)
    model[mask] = (
        a0
        + a1_used * u
        + a2_used * v
        + (a3 if abs(a3) >= tiny else 0.0) * u * u
        + (a4 if abs(a4) >= tiny else 0.0) * v * v
    )
    resid = np.where(mask, phase.data - model, 0.0)
    offset = a0 - a * (x0 - cx) ** 2 - b * (y0 - cy) ** 2
    rms = float(np.sqrt(np.mean(resid[mask] ** 2)))
    return LensFit(
        center_x=float(x0),
        center_y=float(y0),
        curvature_x=float(a),
        curvature_y=float(b),
        offset=float(offset),
        aperture_radius_px=r,
        residual=Image2D(resid, phase.pixel_pitch),
        residual_rms=rms,
        aperture_mask=mask,
    )


@dataclass(frozen=True)
class MetricsReport:
    """Relative squared L2 errors of the two displacement components and
    the transmission, their sum, and the derived error regime.

    percent_error averages the present terms and scales by 100; terms whose
    ground-truth norm vanishes are excluded and listed in notes.
    """

    term_dx: float | None
    term_dy: float | None
    term_t: float | None
    total: float
    percent_error: float
    regime: str
    notes: tuple = ()


def classify_error_regime(percent: float) -> str:
    """low / medium / high regime; the 0.25 and 1.0 boundaries round up."""
    if percent < 0:
        raise ParameterError("percent error must be non-negative")
    if percent < REGIME_LOW_LIMIT:
        return "low"
    if percent < REGIME_MEDIUM_LIMIT:
        return "medium"
    return "high"


def _relative_sq(pred: np.ndarray, truth: np.ndarray) -> float | None:
    denom = float(np.sum(truth * truth))
    if denom == 0.0:
        return None
    return float(np.sum((pred - truth) ** 2) / denom)


def relative_l2_loss(
    pred: tuple[VectorField2D, Image2D], truth: tuple[VectorField2D, Image2D]
) -> MetricsReport:
    """Per-field relative squared L2 errors and their sum."""
    pred_disp, pred_t = pred
    truth_disp, truth_t = truth
    if pred_disp.dx.shape != truth_disp.dx.shape or pred_t.data.shape != truth_t.data.shape:
        raise ParameterError("prediction and truth dimensions differ")
    term_dx = _relative_sq(pred_disp.dx, truth_disp.dx)
    term_dy = _relative_sq(pred_disp.dy, truth_disp.dy)
    term_t = _relative_sq(pred_t.data, truth_t.data)
    notes = []
    for name, term in (("dx", term_dx), ("dy", term_dy), ("transmission", term_t)):
        if term is None:
            notes.append(f"{name} ground truth has zero norm; term skipped")
    present = [t for t in (term_dx, term_dy, term_t) if t is not None]
    total = float(sum(present))
    percent = 100.0 * total / len(present) if present else 0.0
    return MetricsReport(
        term_dx=term_dx,
        term_dy=term_dy,
        term_t=term_t,
        total=total,
        percent_error=percent,
        regime=classify_error_regime(percent),
        notes=tuple(notes),
    )
