"""Learned coarse-to-fine speckle tracking (displacement + transmission)."""

from .config import NetConfig, Stage, StageSchedule, default_schedule, paper_scale_config
from .data import ManifestDataset, normalize_images
from .infer import infer_pair
from .layers import (
    cost_volume,
    downsize_half,
    inverse_warp_by_displacement,
    upsample2,
    warp_by_displacement,
)
from .model import SpeckleFlowNet, relative_l2_loss
from .train import evaluate, load_checkpoint, train

__version__ = "0.1.0"
