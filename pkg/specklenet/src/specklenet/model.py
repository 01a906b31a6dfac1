"""Coarse-to-fine displacement/transmission estimation network.

Two independent feature extractors encode the reference and sample images
into pyramids. From the coarsest level down, the reference features are
warped by the running displacement estimate, a correlation cost volume
supplies the matching evidence for a displacement estimator, and a
transmission estimator reads the inverse-warped image pair. Optional
full-resolution refiners sharpen both outputs.
"""

from __future__ import annotations

import torch
from torch import nn

from .config import NetConfig
from .layers import (
    conv_block,
    cost_volume,
    downsize_half,
    inverse_warp_by_displacement,
    upsample2,
    warp_by_displacement,
)


class FeatureExtractor(nn.Module):
    """Strided encoder emitting one feature map per pyramid level 2..L."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        stages = []
        in_ch = 1
        for level in range(2, cfg.max_level + 1):
            out_ch = cfg.channels_at(level)
            stages.append(
                nn.Sequential(
                    conv_block(in_ch, out_ch, stride=2, slope=cfg.leaky_slope),
                    conv_block(out_ch, out_ch, stride=1, slope=cfg.leaky_slope),
                )
            )
            in_ch = out_ch
        self.stages = nn.ModuleList(stages)

    def forward(self, image: torch.Tensor) -> dict:
        feats = {}
        x = image
        for level, stage in enumerate(self.stages, start=2):
            x = stage(x)
            feats[level] = x
        return feats


def _zero_init(conv: nn.Conv2d) -> nn.Conv2d:
    """Residual heads start at zero: with no matching evidence the network
    rests at 'no motion / unit transmission' instead of an arbitrary bias."""
    nn.init.zeros_(conv.weight)
    nn.init.zeros_(conv.bias)
    return conv


class DisplacementEstimator(nn.Module):
    """Residual displacement from the cost volume and the upsampled estimate."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        in_ch = cfg.cost_planes + 2
        blocks = [conv_block(in_ch, cfg.estimator_hidden, slope=cfg.leaky_slope)]
        for _ in range(cfg.estimator_depth - 1):
            blocks.append(
                conv_block(cfg.estimator_hidden, cfg.estimator_hidden, slope=cfg.leaky_slope)
            )
        self.body = nn.Sequential(*blocks)
        self.head = _zero_init(nn.Conv2d(cfg.estimator_hidden, 2, kernel_size=3, padding=1))

    def forward(self, volume: torch.Tensor, disp_up: torch.Tensor) -> torch.Tensor:
        return disp_up + self.head(self.body(torch.cat([volume, disp_up], dim=1)))


class TransmissionEstimator(nn.Module):
    """Residual transmission from the image pair and the upsampled estimate."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        blocks = [conv_block(3, cfg.estimator_hidden, slope=cfg.leaky_slope)]
        for _ in range(cfg.estimator_depth - 1):
            blocks.append(
                conv_block(cfg.estimator_hidden, cfg.estimator_hidden, slope=cfg.leaky_slope)
            )
        self.body = nn.Sequential(*blocks)
        self.head = _zero_init(nn.Conv2d(cfg.estimator_hidden, 1, kernel_size=3, padding=1))

    def forward(self, ref_img, sample_back, trans_up) -> torch.Tensor:
        stacked = torch.cat([ref_img, sample_back, trans_up], dim=1)
        return trans_up + self.head(self.body(stacked))


class Refiner(nn.Module):
    """Full-resolution residual head; the 1x1 output kernel preserves detail."""

    def __init__(self, cfg: NetConfig, field_channels: int):
        super().__init__()
        in_ch = field_channels + 2  # field estimate + both images
        blocks = [conv_block(in_ch, cfg.refiner_hidden, slope=cfg.leaky_slope)]
        for _ in range(cfg.refiner_depth - 1):
            blocks.append(
                conv_block(cfg.refiner_hidden, cfg.refiner_hidden, slope=cfg.leaky_slope)
            )
        self.body = nn.Sequential(*blocks)
        self.head = _zero_init(nn.Conv2d(cfg.refiner_hidden, field_channels, kernel_size=1))

    def forward(self, field, ref_img, sample_img) -> torch.Tensor:
        stacked = torch.cat([field, ref_img, sample_img], dim=1)
        return field + self.head(self.body(stacked))


class SpeckleFlowNet(nn.Module):
    """Full estimator: extractors + per-level estimators + refiners."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        self.extract_ref = FeatureExtractor(cfg)
        self.extract_sample = FeatureExtractor(cfg)
        levels = [str(level) for level in range(2, cfg.max_level + 1)]
        self.flow_estimators = nn.ModuleDict({l: DisplacementEstimator(cfg) for l in levels})
        self.trans_estimators = nn.ModuleDict({l: TransmissionEstimator(cfg) for l in levels})
        self.flow_refiner = Refiner(cfg, field_channels=2)
        self.trans_refiner = Refiner(cfg, field_channels=1)

    @property
    def parameter_count(self) -> int:
        return sum(p.numel() for p in self.parameters())

    def warm_start_level(self, new_level: int, source_level: int) -> None:
        """Copy estimator weights from one level to a newly activated one."""
        self.flow_estimators[str(new_level)].load_state_dict(
            self.flow_estimators[str(source_level)].state_dict()
        )
        self.trans_estimators[str(new_level)].load_state_dict(
            self.trans_estimators[str(source_level)].state_dict()
        )

    def forward(
        self,
        ref: torch.Tensor,
        sample: torch.Tensor,
        min_level: int = 2,
        refiners: bool = False,
    ) -> dict:
        cfg = self.cfg
        if not (2 <= min_level <= cfg.max_level):
            raise ValueError("min_level must lie in [2, max_level]")
        feats_ref = self.extract_ref(ref)
        feats_sample = self.extract_sample(sample)

        images = {1: (ref, sample)}
        for level in range(2, cfg.max_level + 1):
            prev_ref, prev_sample = images[level - 1]
            images[level] = (downsize_half(prev_ref), downsize_half(prev_sample))

        top = cfg.max_level
        b = ref.shape[0]
        h = feats_ref[top].shape[2]
        w = feats_ref[top].shape[3]
        disp = torch.zeros(b, 2, h, w, dtype=ref.dtype, device=ref.device)
        trans = torch.ones(b, 1, h, w, dtype=ref.dtype, device=ref.device)

        per_level = {}
        for level in range(top, min_level - 1, -1):
            if level != top:
                disp = upsample2(disp, scale_values=2.0)
                trans = upsample2(trans)
            warped_ref = warp_by_displacement(feats_ref[level], disp)
            volume = cost_volume(warped_ref, feats_sample[level], cfg.search_range)
            disp = self.flow_estimators[str(level)](volume, disp)
            ref_img, sample_img = images[level]
            sample_back = inverse_warp_by_displacement(sample_img, disp)
            trans = self.trans_estimators[str(level)](ref_img, sample_back, trans)
            per_level[level] = (disp, trans)

        for _ in range(min_level - 1):
            disp = upsample2(disp, scale_values=2.0)
            trans = upsample2(trans)

        if refiners:
            disp = self.flow_refiner(disp, ref, sample)
            sample_back = inverse_warp_by_displacement(sample, disp)
            trans = self.trans_refiner(trans, ref, sample_back)

        return {"displacement": disp, "transmission": trans, "levels": per_level}


def relative_l2_loss(
    pred_disp: torch.Tensor,
    pred_trans: torch.Tensor,
    truth_disp: torch.Tensor,
    truth_trans: torch.Tensor,
) -> torch.Tensor:
    """Sum of per-sample relative squared errors of dx, dy, and T,
    averaged over the batch. Terms with a zero-norm ground truth drop out.
    """
    eps = torch.zeros((), dtype=pred_disp.dtype, device=pred_disp.device)
    total = eps.clone()
    b = pred_disp.shape[0]
    fields = (
        (pred_disp[:, 0], truth_disp[:, 0]),
        (pred_disp[:, 1], truth_disp[:, 1]),
        (pred_trans[:, 0], truth_trans[:, 0]),
    )
    for pred, truth in fields:
        denom = truth.reshape(b, -1).pow(2).sum(dim=1)
        num = (pred - truth).reshape(b, -1).pow(2).sum(dim=1)
        live = denom > 0
        if live.any():
            total = total + (num[live] / denom[live]).sum() / b
    return total
