"""Template-matching speckle tracker (single-shot, per-pixel).

Every interior pixel of the sample image carries a small template that is
compared against reference patches over a window of candidate integer
offsets using zero-normalized cross-correlation; the best offset gets a
parabolic subpixel correction. The convention is

    sample(x, y) ~ ref(x - dx, y - dy)

so the returned field is the displacement the forward model applied.

The full-image sweep evaluates one candidate offset at a time with
box-filter window sums, which is algebraically the per-pixel ZNCC but runs
hundreds of times faster; a second streaming pass retrieves the four
neighbor scores of each pixel's peak for the subpixel fit. Results are
bit-identical for any thread count.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ParameterError
from .grid import Image2D, PyramidStack, VectorField2D, bilinear_map

_VAR_REL_EPS = 1e-12  # relative variance floor below which a patch is flat


@dataclass(frozen=True)
class TrackConfig:
    """Window and pyramid settings for the tracker.

    template_half=3 is a 7x7 template; search_half=10 searches the odd
    21x21 offset window. The pyramid runs the full search only at the
    coarsest of pyramid_levels levels and refines each finer level within
    +/- level_search_half around the upsampled estimate.
    """

    template_half: int = 3
    search_half: int = 10
    pyramid_levels: int = 4
    level_search_half: int = 3
    subpixel: str = "parabolic"
    stride: int = 1
    level_smooth_px: int = 9
    min_score: float = 0.0

    def __post_init__(self):
        if self.template_half < 1 or self.search_half < 1 or self.level_search_half < 1:
            raise ParameterError("window half-sizes must be >= 1")
        if self.template_half > self.search_half:
            raise ParameterError("template window must fit inside the search window")
        if self.pyramid_levels < 2:
            raise ParameterError("pyramid_levels must be >= 2")
        if self.subpixel not in ("parabolic", "none"):
            raise ParameterError("subpixel must be 'parabolic' or 'none'")
        if self.stride < 1:
            raise ParameterError("stride must be >= 1")
        if self.level_smooth_px < 0:
            raise ParameterError("level_smooth_px must be >= 0")
        if not (0.0 <= self.min_score <= 1.0):
            raise ParameterError("min_score must be in [0, 1]")


@dataclass(frozen=True)
class MatchResult:
    """Tracker output: displacement, peak ZNCC score, and validity mask."""

    displacement: VectorField2D
    peak_score: Image2D
    valid_mask: np.ndarray

    def __post_init__(self):
        if np.abs(self.peak_score.data).max() > 1 + 1e-9:
            raise ParameterError("ZNCC scores must lie in [-1, 1]")

    @property
    def valid_fraction(self) -> float:
        return float(self.valid_mask.mean())


def subpixel_refine(score_patch: np.ndarray) -> tuple[float, float]:
    """Subpixel peak offset from a 3x3 score patch centered on the argmax.

    Independent 1D parabolas along x and y:
    delta = (s_minus - s_plus) / (2 * (s_minus - 2*s_0 + s_plus)),
    clamped to [-0.5, 0.5]; a non-concave triple gives 0.
    """
    s = np.asarray(score_patch, dtype=np.float64)
    if s.shape != (3, 3):
        raise ParameterError("score_patch must be 3x3")
    if s[1, 1] < s.max() - 1e-12:
        raise ParameterError("patch center must be the discrete argmax")

    def fit(sm, s0, sp):
        den = sm - 2.0 * s0 + sp
        if den >= 0:
            return 0.0
        return float(np.clip((sm - sp) / (2.0 * den), -0.5, 0.5))

    return fit(s[1, 0], s[1, 1], s[1, 2]), fit(s[0, 1], s[1, 1], s[2, 1])


def _offsets(search_half: int) -> list:
    rng = range(-search_half, search_half + 1)
    return [(p, q) for q in rng for p in rng]


def _box(a: np.ndarray, win: int) -> np.ndarray:
    return ndimage.uniform_filter(a, size=win, mode="constant")


def _zncc_sweep(
    ref: np.ndarray,
    sample: np.ndarray,
    template_half: int,
    search_half: int,
    subpixel: bool,
    threads: int = 1,
):
    """Integer ZNCC search plus parabolic refinement over a whole image.

    Returns (dx, dy, score, degenerate). Values within template_half +
    search_half of the border see wrapped data and must be masked by the
    caller. Offsets are scanned in a fixed order and merged in that order,
    so ties and results do not depend on the thread count.
    """
    win = 2 * template_half + 1
    mean_s = _box(sample, win)
    var_s = np.maximum(_box(sample * sample, win) - mean_s * mean_s, 0.0)
    mean_r = _box(ref, win)
    msq_r = _box(ref * ref, win)
    scale = max(float(np.mean(sample * sample)), 1e-300)
    degenerate = var_s <= _VAR_REL_EPS * scale

    offsets = _offsets(search_half)

    def plane(pq):
        p, q = pq
        shifted = np.roll(ref, (q, p), axis=(0, 1))
        mr = np.roll(mean_r, (q, p), axis=(0, 1))
        var_r = np.maximum(np.roll(msq_r, (q, p), axis=(0, 1)) - mr * mr, 0.0)
        cov = _box(sample * shifted, win) - mean_s * mr
        den = np.sqrt(var_s * var_r)
        ok = den > _VAR_REL_EPS * scale
        return np.where(ok, cov / np.where(ok, den, 1.0), 0.0)

    best = np.full(ref.shape, -2.0)
    best_p = np.zeros(ref.shape, dtype=np.int32)
    best_q = np.zeros(ref.shape, dtype=np.int32)

    def scan_chunk(chunk):
        c_best = np.full(ref.shape, -2.0)
        c_p = np.zeros(ref.shape, dtype=np.int32)
        c_q = np.zeros(ref.shape, dtype=np.int32)
        for p, q in chunk:
            s = plane((p, q))
            upd = s > c_best
            c_best[upd] = s[upd]
            c_p[upd] = p
            c_q[upd] = q
        return c_best, c_p, c_q

    # contiguous ordered chunks + ordered merge reproduce the serial
    # first-wins tie rule for any thread count
    chunks = _split_ordered(offsets, threads) if threads > 1 else [offsets]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(scan_chunk, chunks))
    else:
        results = [scan_chunk(offsets)]
    for c_best, c_p, c_q in results:
        upd = c_best > best
        best[upd] = c_best[upd]
        best_p[upd] = c_p[upd]
        best_q[upd] = c_q[upd]

    best = np.where(degenerate, 0.0, best)
    dx = best_p.astype(np.float64)
    dy = best_q.astype(np.float64)

    if subpixel:
        neighbors = {
            key: np.full(ref.shape, np.nan) for key in ("xm", "xp", "ym", "yp")
        }
        lock = threading.Lock()

        def gather_chunk(chunk):
            local = []
            for p, q in chunk:
                s = plane((p, q))
                masks = (
                    ("xm", (best_p == p + 1) & (best_q == q)),
                    ("xp", (best_p == p - 1) & (best_q == q)),
                    ("ym", (best_p == p) & (best_q == q + 1)),
                    ("yp", (best_p == p) & (best_q == q - 1)),
                )
                local.append((s, masks))
                if len(local) >= 8:
                    flush(local)
                    local = []
            flush(local)

        def flush(items):
            with lock:
                for s, masks in items:
                    for key, m in masks:
                        neighbors[key][m] = s[m]

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                list(pool.map(gather_chunk, chunks))
        else:
            gather_chunk(offsets)

        # a peak at the ZNCC upper bound is already the continuum optimum;
        # fitting a parabola there would predict a score above 1
        at_bound = best >= 1.0 - 1e-9

        def refine(minus, plus):
            den = minus - 2.0 * best + plus
            ok = np.isfinite(minus) & np.isfinite(plus) & (den < 0) & ~at_bound
            out = np.zeros_like(best)
            out[ok] = (minus[ok] - plus[ok]) / (2.0 * den[ok])
            return np.clip(out, -0.5, 0.5)

        dx = dx + refine(neighbors["xm"], neighbors["xp"])
        dy = dy + refine(neighbors["ym"], neighbors["yp"])

    dx = np.where(degenerate, 0.0, dx)
    dy = np.where(degenerate, 0.0, dy)
    return dx, dy, best, degenerate


def _split_ordered(items: list, n: int) -> list:
    """Contiguous chunks preserving global order across chunk boundaries."""
    size = (len(items) + n - 1) // n
    return [items[i : i + size] for i in range(0, len(items), size)]


def zncc_match(
    ref: Image2D, sample: Image2D, x: int, y: int, cfg: TrackConfig = TrackConfig()
) -> tuple[float, float, float]:
    """Displacement and peak score at one pixel.

    Runs the same window sums as the full-image sweep on a cropped
    neighborhood, so single-pixel and full-image results agree exactly.
    A flat (zero-variance) template returns (0, 0, 0).
    """
    margin = cfg.template_half + cfg.search_half
    if not (margin <= x < ref.width - margin and margin <= y < ref.height - margin):
        raise ParameterError(f"pixel ({x}, {y}) closer than {margin} px to the border")
    if (ref.height, ref.width) != (sample.height, sample.width):
        raise ParameterError("reference and sample dimensions differ")
    window = slice(y - margin, y + margin + 1), slice(x - margin, x + margin + 1)
    dx, dy, score, degen = _zncc_sweep(
        ref.data[window],
        sample.data[window],
        cfg.template_half,
        cfg.search_half,
        subpixel=cfg.subpixel == "parabolic",
    )
    if degen[margin, margin]:
        return 0.0, 0.0, 0.0
    return float(dx[margin, margin]), float(dy[margin, margin]), float(score[margin, margin])


def _interior_mask(shape: tuple, band: int) -> np.ndarray:
    m = np.zeros(shape, dtype=bool)
    if shape[0] > 2 * band and shape[1] > 2 * band:
        m[band:-band, band:-band] = True
    return m


def _apply_stride(valid: np.ndarray, stride: int) -> np.ndarray:
    if stride == 1:
        return valid
    keep = np.zeros_like(valid)
    keep[::stride, ::stride] = True
    return valid & keep


def dic_track_full(
    ref: Image2D, sample: Image2D, cfg: TrackConfig = TrackConfig(), threads: int = 1
) -> MatchResult:
    """Exhaustive per-pixel search over the configured offset window."""
    if (ref.height, ref.width) != (sample.height, sample.width):
        raise ParameterError("reference and sample dimensions differ")
    band = cfg.template_half + cfg.search_half
    if min(ref.width, ref.height) <= 2 * band:
        raise ParameterError("image too small for the configured windows")
    dx, dy, score, degen = _zncc_sweep(
        ref.data,
        sample.data,
        cfg.template_half,
        cfg.search_half,
        subpixel=cfg.subpixel == "parabolic",
        threads=threads,
    )
    confident = score >= cfg.min_score
    valid = _apply_stride(
        _interior_mask(ref.data.shape, band) & ~degen & confident, cfg.stride
    )
    dx = np.where(valid, dx, 0.0)
    dy = np.where(valid, dy, 0.0)
    score = np.where(valid, score, 0.0)
    return MatchResult(
        VectorField2D(dx, dy), Image2D(score, ref.pixel_pitch), valid
    )


def _upsample2(arr: np.ndarray, out_h: int, out_w: int, scale: float) -> np.ndarray:
    ys, xs = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    return scale * bilinear_map(arr, (xs + 0.5) / 2.0 - 0.5, (ys + 0.5) / 2.0 - 0.5)


def _fill_border(arr: np.ndarray, band: int) -> np.ndarray:
    """Replace the invalid border band by edge replication of the valid core."""
    h, w = arr.shape
    if band <= 0 or h <= 2 * band or w <= 2 * band:
        return arr
    return np.pad(arr[band:-band, band:-band], band, mode="edge")


def dic_track_pyramid(
    ref: Image2D, sample: Image2D, cfg: TrackConfig = TrackConfig(), threads: int = 1
) -> MatchResult:
    """Coarse-to-fine tracking.

    The coarsest level runs the full search; each finer level warps the
    reference by the upsampled running estimate and searches residual
    offsets within +/- level_search_half.
    """
    if (ref.height, ref.width) != (sample.height, sample.width):
        raise ParameterError("reference and sample dimensions differ")
    levels = cfg.pyramid_levels
    ref_pyr = PyramidStack.build(ref, levels)
    smp_pyr = PyramidStack.build(sample, levels)
    coarse_band = cfg.template_half + cfg.search_half
    if min(ref_pyr.levels[-1].width, ref_pyr.levels[-1].height) <= 2 * coarse_band:
        raise ParameterError("coarsest level too small for the configured windows")

    subpix = cfg.subpixel == "parabolic"
    est_dx = est_dy = None
    valid = None
    score = None
    for level in range(levels - 1, -1, -1):
        r = ref_pyr.levels[level].data
        s = smp_pyr.levels[level].data
        h, w = r.shape
        if level == levels - 1:
            ddx, ddy, score, degen = _zncc_sweep(
                r, s, cfg.template_half, cfg.search_half, subpix, threads
            )
            band = coarse_band
            est_dx, est_dy = ddx, ddy
            valid = _interior_mask(r.shape, band) & ~degen
        else:
            est_dx = _upsample2(est_dx, h, w, 2.0)
            est_dy = _upsample2(est_dy, h, w, 2.0)
            if cfg.level_smooth_px > 1:
                # the prior only carries the large-scale motion; smoothing it
                # keeps estimator jitter out of the warp
                est_dx = ndimage.uniform_filter(est_dx, cfg.level_smooth_px, mode="nearest")
                est_dy = ndimage.uniform_filter(est_dy, cfg.level_smooth_px, mode="nearest")
            ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
            warped = bilinear_map(r, xs - est_dx, ys - est_dy)
            ddx, ddy, score, degen = _zncc_sweep(
                warped, s, cfg.template_half, cfg.level_search_half, subpix, threads
            )
            band = cfg.template_half + cfg.level_search_half
            est_dx = est_dx + ddx
            est_dy = est_dy + ddy
            up_valid = np.repeat(np.repeat(valid, 2, axis=0), 2, axis=1)[:h, :w]
            valid = up_valid & _interior_mask(r.shape, band) & ~degen
        est_dx = _fill_border(est_dx, band)
        est_dy = _fill_border(est_dy, band)

    valid = _apply_stride(valid & (score >= cfg.min_score), cfg.stride)
    est_dx = np.where(valid, est_dx, 0.0)
    est_dy = np.where(valid, est_dy, 0.0)
    score = np.where(valid, score, 0.0)
    return MatchResult(
        VectorField2D(est_dx, est_dy), Image2D(score, ref.pixel_pitch), valid
    )


def transmission_recover(
    ref: Image2D,
    sample: Image2D,
    displacement: VectorField2D,
    median_filter: bool = True,
) -> Image2D:
    """Transmission as the ratio of the sample to the displaced reference."""
    if (ref.height, ref.width) != (sample.height, sample.width):
        raise ParameterError("reference and sample dimensions differ")
    h, w = ref.data.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    warped = bilinear_map(ref.data, xs - displacement.dx, ys - displacement.dy)
    t = sample.data / np.maximum(warped, 1e-6)
    if median_filter:
        t = ndimage.median_filter(t, size=3, mode="nearest")
    return Image2D(t, ref.pixel_pitch)
