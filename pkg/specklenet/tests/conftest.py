"""Shared fixtures: toy datasets are produced by the simulator CLI so the
learning component only ever consumes its external file formats."""

import json
import subprocess
import sys
from pathlib import Path

import pytest

TOY_SYNTH = {
    "synth": {
        "phase_scale_range": [3.141592653589793, 12.566370614359172],
        "noise_blur_px": 15,
    }
}


def make_dataset(out_dir: Path, count: int, seed: int, size: int = 64) -> Path:
    cfg = out_dir / "synth.json"
    cfg.write_text(json.dumps(TOY_SYNTH))
    cmd = [
        "specklekit", "dataset", "--count", str(count), "--seed", str(seed),
        "--out", str(out_dir), "--size", str(size), "--pitch-px", "2",
        "--config", str(cfg), "--verify",
    ]
    proc = subprocess.run(cmd, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return out_dir


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory) -> Path:
    """10 pairs at 64x64: 8 train + 2 validation."""
    return make_dataset(tmp_path_factory.mktemp("toyds"), count=10, seed=42)
