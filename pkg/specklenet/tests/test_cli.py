import json
import subprocess

import numpy as np

from specklenet import spgrid


def test_train_and_infer_round_trip(toy_dataset, tmp_path):
    ckpt = tmp_path / "ckpt"
    proc = subprocess.run(
        ["specklenet-train", "--manifest-dir", str(toy_dataset), "--out", str(ckpt),
         "--epochs", "2", "2", "2", "--hidden", "8", "--base-channels", "4",
         "--max-channels", "8", "--seed", "0"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert "parameters:" in proc.stdout
    assert (ckpt / "checkpoint_stage3.pt").exists()
    history = json.loads((ckpt / "history.json").read_text())
    assert [s["name"] for s in history["stages"]] == ["stage1", "stage2", "stage3"]

    pred = tmp_path / "pred"
    pair = toy_dataset / "pair_000000"
    proc = subprocess.run(
        ["specklenet-infer", "--model", str(ckpt / "checkpoint_stage3.pt"),
         "--ref", str(pair / "ref.spgrid"), "--sample", str(pair / "sample.spgrid"),
         "--out", str(pred)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    paths = json.loads(proc.stdout)
    _, dx = spgrid.read(paths["dx"])
    _, trans = spgrid.read(paths["transmission"])
    assert dx.shape == (1, 64, 64)
    assert trans.shape == (1, 64, 64)
    assert np.isfinite(dx).all() and np.isfinite(trans).all()
