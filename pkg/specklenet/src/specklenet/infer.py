"""Stateless inference: SPGRID1 pair in, SPGRID1 predictions out."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch

from . import spgrid
from .data import normalize_images
from .model import SpeckleFlowNet


def infer_pair(
    model: SpeckleFlowNet,
    ref_path,
    sample_path,
    out_dir,
    min_level: int = 2,
    refiners: bool = True,
) -> dict:
    meta, ref = spgrid.read(ref_path)
    _, sample = spgrid.read(sample_path)
    if ref.shape != sample.shape:
        raise ValueError("reference and sample dimensions differ")
    ref_n, sample_n, _ = normalize_images(
        ref[0].astype(np.float64), sample[0].astype(np.float64)
    )
    dtype = next(model.parameters()).dtype
    ref_t = torch.as_tensor(ref_n, dtype=dtype)[None, None]
    sample_t = torch.as_tensor(sample_n, dtype=dtype)[None, None]
    model.eval()
    with torch.no_grad():
        out = model(ref_t, sample_t, min_level=min_level, refiners=refiners)
    disp = out["displacement"][0].cpu().numpy()
    trans = out["transmission"][0, 0].cpu().numpy()

    out_path = Path(out_dir)
    out_path.mkdir(parents=True, exist_ok=True)
    pitch = meta["pixel_pitch_m"]
    paths = {
        "dx": out_path / "dx.spgrid",
        "dy": out_path / "dy.spgrid",
        "transmission": out_path / "transmission.spgrid",
    }
    spgrid.write(paths["dx"], disp[0], "disp_px_x", pitch)
    spgrid.write(paths["dy"], disp[1], "disp_px_y", pitch)
    spgrid.write(paths["transmission"], trans, "transmission", pitch)
    return {name: str(path) for name, path in paths.items()}
