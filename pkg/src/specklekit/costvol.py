"""Deterministic cost-volume registration machinery.

A feature stack is warped toward the sample frame by a running displacement
estimate, a 3D cost volume of windowless per-pixel correlation products is
built over a square offset candidate grid, and the displacement is read out
as the (subpixel-refined) argmax. Run coarse-to-fine this is a learning-free
analyzer; the same layer semantics also define the reference behavior a
learned estimator must reproduce.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ParameterError
from .grid import Image2D, VectorField2D, bilinear_map, downsample_by_2


@dataclass(frozen=True)
class FeatureStack:
    """K feature planes over one spatial grid, stored channel-major (K, H, W)."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data, dtype=np.float64)
        if a.ndim == 2:
            a = a[None, :, :]
        if a.ndim != 3 or a.shape[0] < 1:
            raise ParameterError(f"FeatureStack needs (K, H, W) data, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ParameterError("FeatureStack contains non-finite samples")
        a = np.ascontiguousarray(a)
        a.flags.writeable = False
        object.__setattr__(self, "data", a)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @classmethod
    def from_image(cls, img: Image2D) -> "FeatureStack":
        return cls(img.data[None, :, :])


@dataclass(frozen=True)
class CostVolume:
    """(2N+1)^2 correlation planes indexed by h = (p+N)*(2N+1) + (q+N)."""

    scores: np.ndarray
    search_range: int

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        n = self.search_range
        if n < 1:
            raise ParameterError("search_range must be >= 1")
        if s.ndim != 3 or s.shape[0] != (2 * n + 1) ** 2:
            raise ParameterError(
                f"expected {(2 * n + 1) ** 2} planes for search range {n}, got {s.shape}"
            )
        s = np.ascontiguousarray(s)
        s.flags.writeable = False
        object.__setattr__(self, "scores", s)

    @property
    def plane_count(self) -> int:
        return self.scores.shape[0]

    def plane_index(self, p: int, q: int) -> int:
        n = self.search_range
        if not (-n <= p <= n and -n <= q <= n):
            raise ParameterError(f"offset ({p}, {q}) outside +/-{n}")
        return (p + n) * (2 * n + 1) + (q + n)

    def offset_of(self, h: int) -> tuple[int, int]:
        n = self.search_range
        side = 2 * n + 1
        return h // side - n, h % side - n


def warp_features(features: FeatureStack, displacement: VectorField2D) -> FeatureStack:
    """Warp each channel toward the sample frame: P'(x, y) = P(x-dx, y-dy).

    Transmission is deliberately not applied here; keeping the warp purely
    geometric avoids coupling intensity changes into the correlation.
    """
    if (features.height, features.width) != (displacement.height, displacement.width):
        raise ParameterError("feature and displacement dimensions differ")
    h, w = features.height, features.width
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = xs - displacement.dx
    sy = ys - displacement.dy
    out = np.stack([bilinear_map(plane, sx, sy) for plane in features.data])
    return FeatureStack(out)


def inverse_warp_features(features: FeatureStack, displacement: VectorField2D) -> FeatureStack:
    """Approximate inverse of warp_features: gather at the negated displacement.

    Exact for constant integer displacements; first-order accurate for
    smooth fields.
    """
    if (features.height, features.width) != (displacement.height, displacement.width):
        raise ParameterError("feature and displacement dimensions differ")
    h, w = features.height, features.width
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    sx = xs + displacement.dx
    sy = ys + displacement.dy
    out = np.stack([bilinear_map(plane, sx, sy) for plane in features.data])
    return FeatureStack(out)


def _shift_clamped(plane: np.ndarray, p: int, q: int) -> np.ndarray:
    """plane(x - p, y - q) with border clamping."""
    h, w = plane.shape
    iy = np.clip(np.arange(h) - q, 0, h - 1)
    ix = np.clip(np.arange(w) - p, 0, w - 1)
    return plane[np.ix_(iy, ix)]


def build_cost_volume(ref_feat: FeatureStack, sample_feat: FeatureStack, n: int) -> CostVolume:
    """Channel-averaged correlation product over all offsets in [-n, n]^2.

    C(x, y, h) = (1/K) * sum_k ref(x-p, y-q, k) * sample(x, y, k), with the
    reference already warped by the running estimate. Channels accumulate in
    fixed order so results are reproducible bit-for-bit.
    """
    if ref_feat.data.shape != sample_feat.data.shape:
        raise ParameterError("feature stacks must share dimensions and channel count")
    if not (1 <= n <= 6):
        raise ParameterError("search range must be in 1..6")
    k, h, w = ref_feat.data.shape
    side = 2 * n + 1
    scores = np.empty((side * side, h, w), dtype=np.float64)
    for p in range(-n, n + 1):
        for q in range(-n, n + 1):
            acc = np.zeros((h, w), dtype=np.float64)
            for ch in range(k):
                acc += _shift_clamped(ref_feat.data[ch], p, q) * sample_feat.data[ch]
            scores[(p + n) * side + (q + n)] = acc / k
    return CostVolume(scores, n)


def argmax_displacement(vol: CostVolume, subpixel: bool = True) -> VectorField2D:
    """Per-pixel best offset, ties broken toward smaller |p|+|q| then (p, q).

    Subpixel refinement fits independent parabolas along p and q where the
    neighbor planes exist.
    """
    n = vol.search_range
    side = 2 * n + 1
    offsets = [(p, q) for p in range(-n, n + 1) for q in range(-n, n + 1)]
    priority = sorted(range(len(offsets)), key=lambda h: (
        abs(offsets[h][0]) + abs(offsets[h][1]), offsets[h][0], offsets[h][1]))
    ranked = vol.scores[priority]
    best_rank = np.argmax(ranked, axis=0)
    plane_of_rank = np.asarray(priority)
    best_h = plane_of_rank[best_rank]
    ps = np.asarray([pq[0] for pq in offsets], dtype=np.float64)
    qs = np.asarray([pq[1] for pq in offsets], dtype=np.float64)
    dx = ps[best_h]
    dy = qs[best_h]

    if subpixel:
        best_score = np.take_along_axis(vol.scores, best_h[None], axis=0)[0]

        def neighbor(dp, dq):
            hp = best_h + dp * side + dq
            in_range = (np.abs(dx + dp) <= n) & (np.abs(dy + dq) <= n)
            safe = np.where(in_range, hp, 0)
            vals = np.take_along_axis(vol.scores, safe[None], axis=0)[0]
            return np.where(in_range, vals, np.nan)

        def refine(minus, plus):
            den = minus - 2.0 * best_score + plus
            ok = np.isfinite(minus) & np.isfinite(plus) & (den < 0)
            out = np.zeros_like(best_score)
            out[ok] = (minus[ok] - plus[ok]) / (2.0 * den[ok])
            return np.clip(out, -0.5, 0.5)

        dx = dx + refine(neighbor(-1, 0), neighbor(1, 0))
        dy = dy + refine(neighbor(0, -1), neighbor(0, 1))

    return VectorField2D(dx, dy)


def _normalized_feature(intensity: np.ndarray, win: int) -> np.ndarray:
    """Local mean removal plus local energy normalization.

    Without this, the raw product volume drifts toward bright regions
    instead of the matching offset; the normalized feature makes the pooled
    volume behave like a windowed correlation coefficient.
    """
    centered = intensity - ndimage.uniform_filter(intensity, size=win, mode="nearest")
    energy = ndimage.uniform_filter(centered * centered, size=win, mode="nearest")
    floor = 1e-12 * max(float(energy.mean()), 1e-300)
    return centered / np.sqrt(np.maximum(energy, floor))


def pool_cost_volume(vol: CostVolume, pool_half: int) -> CostVolume:
    """Box-average every plane over a (2*pool_half+1)^2 window.

    The per-pixel correlation product carries no localization on its own
    (the largest product just points at the brightest neighbor); spatial
    aggregation is what turns the volume into a matching score, the same
    role the convolution stages of a learned estimator play.
    """
    if pool_half < 1:
        raise ParameterError("pool_half must be >= 1")
    win = 2 * pool_half + 1
    pooled = np.stack(
        [ndimage.uniform_filter(plane, size=win, mode="nearest") for plane in vol.scores]
    )
    return CostVolume(pooled, vol.search_range)


def multiscale_costvol_track(
    ref: Image2D,
    sample: Image2D,
    num_levels: int = 4,
    search_range: int = 3,
    pool_half: int = 6,
    prior_smooth_px: int = 9,
) -> VectorField2D:
    """Coarse-to-fine cost-volume tracking of intensity.

    At each level (coarsest first) the local mean is removed from both
    intensities, the reference feature plane is warped by the upsampled
    (and lightly smoothed) running estimate, a cost volume of range
    search_range is built, box-pooled, and read out via argmax; the
    estimate doubles when moving down a level.
    """
    if num_levels < 2:
        raise ParameterError("num_levels must be >= 2")
    factor = 2 ** (num_levels - 1)
    if ref.width % factor or ref.height % factor:
        raise ParameterError(f"dimensions must be divisible by {factor}")
    if (ref.height, ref.width) != (sample.height, sample.width):
        raise ParameterError("reference and sample dimensions differ")

    ref_levels = [ref]
    smp_levels = [sample]
    for _ in range(num_levels - 1):
        ref_levels.append(downsample_by_2(ref_levels[-1]))
        smp_levels.append(downsample_by_2(smp_levels[-1]))

    win = 2 * pool_half + 1
    est: VectorField2D | None = None
    for level in range(num_levels - 1, -1, -1):
        r = ref_levels[level].data
        s = smp_levels[level].data
        h, w = r.shape
        if est is None:
            est = VectorField2D.zeros(w, h)
        else:
            ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
            sx = (xs + 0.5) / 2.0 - 0.5
            sy = (ys + 0.5) / 2.0 - 0.5
            dx = 2.0 * bilinear_map(est.dx, sx, sy)
            dy = 2.0 * bilinear_map(est.dy, sx, sy)
            if prior_smooth_px > 1:
                dx = ndimage.uniform_filter(dx, prior_smooth_px, mode="nearest")
                dy = ndimage.uniform_filter(dy, prior_smooth_px, mode="nearest")
            est = VectorField2D(dx, dy)
        feat_r = _normalized_feature(r, win)
        feat_s = _normalized_feature(s, win)
        warped = warp_features(FeatureStack(feat_r[None]), est)
        vol = build_cost_volume(warped, FeatureStack(feat_s[None]), search_range)
        residual = argmax_displacement(pool_cost_volume(vol, pool_half), subpixel=True)
        est = VectorField2D(est.dx + residual.dx, est.dy + residual.dy)
    return est
