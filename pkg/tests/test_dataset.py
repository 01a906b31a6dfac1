import json

import numpy as np
import pytest

import specklekit as sk
from specklekit import VerificationError
from specklekit.dataset import generate_dataset, load_manifest, verify_dataset


def _gen(tmp_path, name, **kwargs):
    defaults = dict(count=3, master_seed=7, size=64, mask_pitch_px=8)
    defaults.update(kwargs)
    out = tmp_path / name
    manifest = generate_dataset(out, **defaults)
    return out, manifest


class TestGeneration:
    def test_reproducible_digests(self, tmp_path):
        _, m1 = _gen(tmp_path, "a")
        _, m2 = _gen(tmp_path, "b")
        d1 = [p["digests"] for p in m1["pairs"]]
        d2 = [p["digests"] for p in m2["pairs"]]
        assert d1 == d2

    def test_split_sizes(self, tmp_path):
        _, manifest = _gen(tmp_path, "c", count=10)
        assert len(manifest["split"]["train"]) == 8
        assert len(manifest["split"]["validation"]) == 2

    def test_split_arithmetic_at_scale(self):
        # bookkeeping only: floor(0.8 * n) train, remainder validation
        from specklekit.dataset import TRAIN_FRACTION

        n = 10000
        train = int(TRAIN_FRACTION * n)
        assert train == 8000 and n - train == 2000

    def test_threads_do_not_change_bytes(self, tmp_path):
        _, m1 = _gen(tmp_path, "d", count=4, threads=1)
        _, m2 = _gen(tmp_path, "e", count=4, threads=4)
        assert [p["digests"] for p in m1["pairs"]] == [p["digests"] for p in m2["pairs"]]

    def test_manifest_loads(self, tmp_path):
        out, _ = _gen(tmp_path, "f")
        manifest = load_manifest(out)
        assert manifest["count"] == 3
        assert manifest["synth"]["noise_sigma"] == 0


class TestVerification:
    def test_fresh_dataset_verifies(self, tmp_path):
        out, _ = _gen(tmp_path, "g", count=4)
        report = verify_dataset(out)
        assert report["pairs_checked"] == 4
        assert report["forward_model_checked"] is True

    def test_corrupted_file_detected(self, tmp_path):
        out, manifest = _gen(tmp_path, "h")
        victim = out / manifest["pairs"][1]["files"]["ref"]
        blob = bytearray(victim.read_bytes())
        blob[-1] ^= 0xFF
        victim.write_bytes(bytes(blob))
        with pytest.raises(VerificationError):
            verify_dataset(out)

    def test_tampered_sample_fails_forward_check(self, tmp_path):
        out, manifest = _gen(tmp_path, "i")
        pair = manifest["pairs"][0]
        victim = out / pair["files"]["sample"]
        header, payload = sk.read_grid(victim)
        tampered = payload.copy()
        tampered[0, 5, 5] += 0.5
        sk.write_grid(victim, header, tampered)
        # keep the manifest digest consistent so only the model check fires
        manifest["pairs"][0]["digests"]["sample"] = sk.file_digest(victim)
        (out / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(VerificationError) as err:
            verify_dataset(out)
        assert "forward model" in str(err.value)

    def test_noisy_dataset_skips_forward_check(self, tmp_path):
        out, _ = _gen(tmp_path, "j", synth=sk.SynthConfig(noise_sigma=0.01))
        report = verify_dataset(out)
        assert report["forward_model_checked"] is False
