"""Differentiable building blocks: warp, cost volume, conv blocks.

The warp and cost-volume layers reproduce the deterministic analyzer
semantics (bilinear gather at x - dx with border clamping; channel-mean
correlation products over a square offset grid with clamped shifts), so a
trained estimator and the learning-free reference path see the same
geometry.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn


def warp_by_displacement(features: torch.Tensor, disp: torch.Tensor) -> torch.Tensor:
    """Sample `features` at (x - dx, y - dy) with border clamping.

    features: (B, C, H, W); disp: (B, 2, H, W) with channel 0 = dx.
    Zero displacement is the exact identity.
    """
    b, _, h, w = features.shape
    ys, xs = torch.meshgrid(
        torch.arange(h, dtype=features.dtype, device=features.device),
        torch.arange(w, dtype=features.dtype, device=features.device),
        indexing="ij",
    )
    sx = xs.unsqueeze(0) - disp[:, 0]
    sy = ys.unsqueeze(0) - disp[:, 1]
    gx = 2.0 * sx / max(w - 1, 1) - 1.0
    gy = 2.0 * sy / max(h - 1, 1) - 1.0
    grid = torch.stack([gx, gy], dim=-1)
    return F.grid_sample(
        features, grid, mode="bilinear", padding_mode="border", align_corners=True
    )


def inverse_warp_by_displacement(features: torch.Tensor, disp: torch.Tensor) -> torch.Tensor:
    """Gather at (x + dx, y + dy): first-order inverse of the forward warp."""
    return warp_by_displacement(features, -disp)


def cost_volume(ref_feat: torch.Tensor, sample_feat: torch.Tensor, search_range: int) -> torch.Tensor:
    """Channel-averaged correlation product over offsets in [-N, N]^2.

    Output (B, (2N+1)^2, H, W), plane h = (p+N)*(2N+1) + (q+N); the
    reference is indexed at (x-p, y-q) with border clamping.
    """
    n = search_range
    b, c, h, w = ref_feat.shape
    padded = F.pad(ref_feat, (n, n, n, n), mode="replicate")
    planes = []
    for p in range(-n, n + 1):
        for q in range(-n, n + 1):
            # padded[(y+n) - q, (x+n) - p] == ref_feat(x - p, y - q) clamped
            shifted = padded[:, :, n - q : n - q + h, n - p : n - p + w]
            planes.append((shifted * sample_feat).mean(dim=1))
    return torch.stack(planes, dim=1)


def conv_block(in_ch: int, out_ch: int, stride: int = 1, slope: float = 0.1) -> nn.Sequential:
    """Conv 3x3 + batch norm + leaky ReLU; stride 2 halves the resolution."""
    return nn.Sequential(
        nn.Conv2d(in_ch, out_ch, kernel_size=3, stride=stride, padding=1),
        nn.BatchNorm2d(out_ch),
        nn.LeakyReLU(slope, inplace=True),
    )


def upsample2(x: torch.Tensor, scale_values: float = 1.0) -> torch.Tensor:
    """Double the spatial resolution; displacement fields also scale values."""
    return scale_values * F.interpolate(
        x, scale_factor=2, mode="bilinear", align_corners=False
    )


def downsize_half(x: torch.Tensor) -> torch.Tensor:
    """Bilinear image downsizing by a factor of 2 per axis."""
    return F.interpolate(x, scale_factor=0.5, mode="bilinear", align_corners=False)
