"""Dataset access: manifest-described corpora of SPGRID1 grids.

Images are normalized per pair by the reference mean (both images share
one scale so the transmission ratio survives) and shifted to be roughly
zero-centered for the convolutions.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from . import spgrid


class PairSample:
    __slots__ = ("ref", "sample", "disp", "trans", "scale", "pixel_pitch")

    def __init__(self, ref, sample, disp, trans, scale, pixel_pitch):
        self.ref = ref
        self.sample = sample
        self.disp = disp
        self.trans = trans
        self.scale = scale
        self.pixel_pitch = pixel_pitch


def normalize_images(ref: np.ndarray, sample: np.ndarray) -> tuple:
    scale = float(ref.mean())
    if scale <= 0:
        scale = 1.0
    return (ref / scale - 1.0), (sample / scale - 1.0), scale


class ManifestDataset:
    """Lazy loader over one dataset directory written by the simulator CLI."""

    def __init__(self, dataset_dir, split: str = "train", dtype=torch.float32):
        self.root = Path(dataset_dir)
        manifest = json.loads((self.root / "manifest.json").read_text())
        self.manifest = manifest
        if split not in manifest["split"]:
            raise ValueError(f"unknown split {split!r}")
        wanted = set(manifest["split"][split])
        self.pairs = [p for p in manifest["pairs"] if p["index"] in wanted]
        self.dtype = dtype

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, i: int) -> PairSample:
        entry = self.pairs[i]
        files = entry["files"]
        meta, ref = spgrid.read(self.root / files["ref"])
        _, sample = spgrid.read(self.root / files["sample"])
        _, dx = spgrid.read(self.root / files["dx"])
        _, dy = spgrid.read(self.root / files["dy"])
        _, trans = spgrid.read(self.root / files["transmission"])
        ref_n, sample_n, scale = normalize_images(
            ref[0].astype(np.float64), sample[0].astype(np.float64)
        )
        to = lambda a: torch.as_tensor(np.array(a, dtype=np.float64), dtype=self.dtype)
        return PairSample(
            ref=to(ref_n)[None],
            sample=to(sample_n)[None],
            disp=torch.stack([to(dx[0]), to(dy[0])]),
            trans=to(trans[0])[None],
            scale=scale,
            pixel_pitch=meta["pixel_pitch_m"],
        )

    def stacked(self, indices=None) -> dict:
        """Whole-split (or subset) batch as stacked tensors."""
        idx = range(len(self)) if indices is None else indices
        items = [self[i] for i in idx]
        return {
            "ref": torch.stack([s.ref for s in items]),
            "sample": torch.stack([s.sample for s in items]),
            "disp": torch.stack([s.disp for s in items]),
            "trans": torch.stack([s.trans for s in items]),
        }
