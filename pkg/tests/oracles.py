"""Independent brute-force reference implementations used only by tests.

These deliberately avoid the library's fast paths: direct nested sums,
no FFTs, no box filters.
"""

import numpy as np


def fresnel_direct_sum(field: np.ndarray, wavelength: float, distance: float, pitch: float):
    """O(N^4) quadrature of the near-field diffraction integral.

    out(x, y) = e^{jkd}/(j*lam*d) * sum_{x0,y0} u(x0,y0)
                * e^{jk((x-x0)^2+(y-y0)^2) p^2 / (2d)} * p^2
    """
    k = 2 * np.pi / wavelength
    h, w = field.shape
    pref = np.exp(1j * k * distance) / (1j * wavelength * distance) * pitch * pitch
    beta = k * pitch * pitch / (2 * distance)
    out = np.zeros((h, w), dtype=complex)
    xs = np.arange(w)
    ys = np.arange(h)
    for y in range(h):
        for x in range(w):
            dx2 = (x - xs) ** 2
            dy2 = (y - ys) ** 2
            chirp = np.exp(1j * beta * (dy2[:, None] + dx2[None, :]))
            out[y, x] = (field * chirp).sum()
    return pref * out


def zncc_direct(ref: np.ndarray, sample: np.ndarray, x: int, y: int, th: int, sh: int):
    """Direct per-pixel ZNCC search; returns (dx, dy, score) with the same
    parabolic refinement formula applied by hand."""
    t = sample[y - th : y + th + 1, x - th : x + th + 1]
    tm = t - t.mean()
    tn = np.sqrt((tm * tm).sum())
    scores = {}
    for q in range(-sh, sh + 1):
        for p in range(-sh, sh + 1):
            r = ref[y - q - th : y - q + th + 1, x - p - th : x - p + th + 1]
            rm = r - r.mean()
            rn = np.sqrt((rm * rm).sum())
            scores[(p, q)] = 0.0 if tn * rn == 0 else float((tm * rm).sum() / (tn * rn))
    best = max(scores, key=lambda k_: scores[k_])
    p0, q0 = best
    if scores[best] >= 1.0 - 1e-9:
        return float(p0), float(q0), scores[best]

    def para(sm, s0, sp):
        den = sm - 2 * s0 + sp
        if den >= 0:
            return 0.0
        return float(np.clip((sm - sp) / (2 * den), -0.5, 0.5))

    ddx = para(scores[(p0 - 1, q0)], scores[best], scores[(p0 + 1, q0)]) if abs(p0) < sh else 0.0
    ddy = para(scores[(p0, q0 - 1)], scores[best], scores[(p0, q0 + 1)]) if abs(q0) < sh else 0.0
    return p0 + ddx, q0 + ddy, scores[best]


def cost_volume_direct(ref_feat: np.ndarray, sample_feat: np.ndarray, n: int):
    """Triple-loop cost volume with clamped indexing, channel sum in order."""
    k, h, w = ref_feat.shape
    side = 2 * n + 1
    out = np.zeros((side * side, h, w))
    for p in range(-n, n + 1):
        for q in range(-n, n + 1):
            plane = (p + n) * side + (q + n)
            for y in range(h):
                for x in range(w):
                    xs = min(max(x - p, 0), w - 1)
                    ys = min(max(y - q, 0), h - 1)
                    acc = 0.0
                    for ch in range(k):
                        acc += ref_feat[ch, ys, xs] * sample_feat[ch, y, x]
                    out[plane, y, x] = acc / k
    return out


def fit_gaussian_sigma(img: np.ndarray) -> float:
    """Least-squares sigma of a centered isotropic Gaussian blob via the
    second moment of the (non-negative) image."""
    h, w = img.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    total = img.sum()
    cx = (img * xs).sum() / total
    cy = (img * ys).sum() / total
    var = (img * ((xs - cx) ** 2 + (ys - cy) ** 2)).sum() / total / 2.0
    return float(np.sqrt(var))
