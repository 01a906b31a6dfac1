import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner

import specklekit as sk
from specklekit.cli import main
from conftest import smooth_sinusoid_field, warp_pair


@pytest.fixture()
def runner():
    return CliRunner()


def _invoke(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    return result


def _write_field(tmp_path, name, data, semantic):
    path = tmp_path / name
    sk.write_image(path, sk.Image2D(np.asarray(data, float)), semantic)
    return str(path)


@pytest.fixture(scope="module")
def small_pair_dir(tmp_path_factory):
    """One 128x128 generated pair on disk, reused by several commands."""
    out = tmp_path_factory.mktemp("pair")
    runner = CliRunner()
    result = runner.invoke(
        main,
        ["dataset", "--count", "1", "--seed", "5", "--out", str(out), "--size", "128",
         "--pitch-px", "2", "--verify", "--json"],
        catch_exceptions=False,
    )
    assert result.exit_code == 0, result.output
    return out / "pair_000000"


class TestMaskCommand:
    def test_generates_and_reports(self, runner, tmp_path):
        out = tmp_path / "mask.spgrid"
        result = _invoke(runner, ["mask", "--size", "128", "--pitch-px", "8",
                                  "--seed", "3", "--out", str(out), "--json"])
        assert result.exit_code == 0
        payload = json.loads(result.output)
        assert payload["coarse_ones"] == 128
        assert payload["coarse_cells"] == 256
        rerun = _invoke(runner, ["mask", "--size", "128", "--pitch-px", "8",
                                 "--seed", "3", "--out", str(out), "--json"])
        assert json.loads(rerun.output)["digest"] == payload["digest"]

    def test_bad_pitch_exit_code(self, runner, tmp_path):
        result = runner.invoke(
            main, ["mask", "--size", "100", "--pitch-px", "8", "--out",
                   str(tmp_path / "m.spgrid")]
        )
        assert result.exit_code == 2


class TestDatasetCommand:
    def test_verify_passes(self, runner, tmp_path):
        out = tmp_path / "ds"
        result = _invoke(runner, ["dataset", "--count", "2", "--seed", "1", "--out",
                                  str(out), "--size", "64", "--verify", "--json"])
        assert result.exit_code == 0
        payload = json.loads(result.output)
        assert payload["train"] == 1 and payload["validation"] == 1
        assert payload["verified_pairs"] == 2

    def test_verify_dataset_detects_corruption(self, runner, tmp_path):
        out = tmp_path / "ds2"
        _invoke(runner, ["dataset", "--count", "1", "--seed", "2", "--out", str(out),
                         "--size", "64"])
        victim = next(out.glob("pair_*/ref.spgrid"))
        blob = bytearray(victim.read_bytes())
        blob[-2] ^= 0x01
        victim.write_bytes(bytes(blob))
        result = runner.invoke(main, ["verify-dataset", "--dir", str(out)])
        assert result.exit_code == 4


class TestTrackCommand:
    def test_identical_pair_near_zero(self, runner, tmp_path, small_pair_dir):
        ref = str(small_pair_dir / "ref.spgrid")
        out = tmp_path / "track0"
        result = _invoke(runner, ["track", "--ref", ref, "--sample", ref, "--out",
                                  str(out), "--method", "dic-pyramid", "--levels", "3",
                                  "--json"])
        assert result.exit_code == 0
        dx = sk.read_image(out / "dx.spgrid").data
        inner = (slice(20, -20), slice(20, -20))
        assert np.abs(dx[inner]).max() < 0.05

    def test_costvol_reports_plane_count(self, runner, tmp_path, small_pair_dir):
        ref = str(small_pair_dir / "ref.spgrid")
        out = tmp_path / "trackcv"
        result = _invoke(runner, ["track", "--ref", ref, "--sample", ref, "--out",
                                  str(out), "--method", "costvol", "--costvol-range", "3",
                                  "--levels", "3", "--json"])
        assert result.exit_code == 0
        assert json.loads(result.output)["cost_volume_planes"] == 49

    def test_tracked_pair_passes_metrics(self, runner, tmp_path, small_pair_dir):
        out = tmp_path / "trackm"
        result = _invoke(
            runner,
            ["track", "--ref", str(small_pair_dir / "ref.spgrid"),
             "--sample", str(small_pair_dir / "sample.spgrid"), "--out", str(out),
             "--method", "dic-pyramid", "--template-half", "4", "--levels", "3", "--json"],
        )
        assert result.exit_code == 0
        metrics = _invoke(
            runner,
            ["metrics",
             "--pred-dx", str(out / "dx.spgrid"), "--pred-dy", str(out / "dy.spgrid"),
             "--pred-t", str(out / "transmission.spgrid"),
             "--truth-dx", str(small_pair_dir / "dx.spgrid"),
             "--truth-dy", str(small_pair_dir / "dy.spgrid"),
             "--truth-t", str(small_pair_dir / "transmission.spgrid"), "--json"],
        )
        assert metrics.exit_code == 0
        payload = json.loads(metrics.output)
        assert payload["total"] < 3.0

    def test_dim_mismatch_exit(self, runner, tmp_path, small_pair_dir):
        other = _write_field(tmp_path, "small.spgrid", np.zeros((64, 64)), "intensity")
        result = runner.invoke(
            main,
            ["track", "--ref", str(small_pair_dir / "ref.spgrid"), "--sample", other,
             "--out", str(tmp_path / "x")],
        )
        assert result.exit_code == 2


class TestIntegrateCommand:
    def test_zero_displacement_zero_phase(self, runner, tmp_path):
        dx = _write_field(tmp_path, "dx.spgrid", np.zeros((64, 64)), "disp_px_x")
        dy = _write_field(tmp_path, "dy.spgrid", np.zeros((64, 64)), "disp_px_y")
        out = tmp_path / "phase.spgrid"
        result = _invoke(runner, ["integrate", "--dx", dx, "--dy", dy, "--out",
                                  str(out), "--json"])
        assert result.exit_code == 0
        payload = json.loads(result.output)
        assert payload["wavelength_nm"] == pytest.approx(0.0886)
        assert payload["distance_m"] == pytest.approx(0.628)
        assert payload["pitch_um"] == pytest.approx(0.65)
        assert np.abs(sk.read_image(out).data).max() < 1e-12

    def test_truth_displacement_recovers_phase(self, runner, tmp_path):
        from specklekit.grid import blur_array

        rng = np.random.default_rng(90)
        field = blur_array(rng.normal(size=(128, 128)), 13)
        field *= 5.0 / np.abs(field).max()
        phase_img = sk.Image2D(field)
        synth = sk.SynthConfig()
        disp = sk.displacement_from_phase(phase_img, synth)
        dx = _write_field(tmp_path, "tdx.spgrid", disp.dx, "disp_px_x")
        dy = _write_field(tmp_path, "tdy.spgrid", disp.dy, "disp_px_y")
        out = tmp_path / "tphase.spgrid"
        result = _invoke(
            runner,
            ["integrate", "--dx", dx, "--dy", dy, "--out", str(out),
             "--wavelength-nm", str(synth.wavelength * 1e9),
             "--distance-m", str(synth.mask_to_camera),
             "--pitch-um", str(synth.pixel_pitch * 1e6), "--plot", "--json"],
        )
        assert result.exit_code == 0
        recovered = sk.read_image(out).data
        target = field - field.mean()
        rel = np.linalg.norm(recovered - target) / np.linalg.norm(target)
        assert rel < 0.01
        assert Path(json.loads(result.output)["plot"]).exists()


class TestLensCommand:
    def test_aperture_echo_and_flat_fit(self, runner, tmp_path):
        ys, xs = np.mgrid[0:1400, 0:1400].astype(float)
        phi = -1e-4 * ((xs - 700) ** 2 + (ys - 700) ** 2)
        path = _write_field(tmp_path, "lens.spgrid", phi, "phase_rad")
        result = _invoke(runner, ["lens", "--phase", path, "--aperture-um", "800", "--json"])
        assert result.exit_code == 0
        payload = json.loads(result.output)
        assert payload["aperture_radius_px"] == pytest.approx(615.385, abs=0.01)
        # float32 grid storage bounds the residual, not the fit itself
        assert payload["residual_rms_rad"] < 1e-5
        assert payload["curvature_x_rad_per_px2"] == pytest.approx(-1e-4, rel=1e-6)


class TestMetricsCommand:
    def test_identity_exit_zero(self, runner, tmp_path):
        rng = np.random.default_rng(91)
        dx = rng.normal(size=(32, 32))
        files = {
            "dx": _write_field(tmp_path, "m_dx.spgrid", dx, "disp_px_x"),
            "dy": _write_field(tmp_path, "m_dy.spgrid", dx + 1, "disp_px_y"),
            "t": _write_field(tmp_path, "m_t.spgrid", np.full((32, 32), 0.9), "transmission"),
        }
        result = _invoke(
            runner,
            ["metrics", "--pred-dx", files["dx"], "--pred-dy", files["dy"],
             "--pred-t", files["t"], "--truth-dx", files["dx"], "--truth-dy", files["dy"],
             "--truth-t", files["t"], "--json"],
        )
        assert result.exit_code == 0
        assert json.loads(result.output)["regime"] == "low"

    def test_fail_above_threshold(self, runner, tmp_path):
        rng = np.random.default_rng(92)
        dx = rng.normal(size=(32, 32))
        pred = _write_field(tmp_path, "p_dx.spgrid", dx * 1.1, "disp_px_x")
        truth = _write_field(tmp_path, "t_dx.spgrid", dx, "disp_px_x")
        rest = {
            "dy": _write_field(tmp_path, "p_dy.spgrid", dx, "disp_px_y"),
            "t": _write_field(tmp_path, "p_t.spgrid", np.full((32, 32), 0.9), "transmission"),
        }
        result = runner.invoke(
            main,
            ["metrics", "--pred-dx", pred, "--pred-dy", rest["dy"], "--pred-t", rest["t"],
             "--truth-dx", truth, "--truth-dy", rest["dy"], "--truth-t", rest["t"],
             "--fail-above", "low"],
        )
        assert result.exit_code == 4


class TestBenchCommand:
    def test_reports_and_determinism(self, runner):
        result = _invoke(
            runner,
            ["bench", "--size", "128", "--repeats", "1", "--threads", "4",
             "--levels", "3", "--method", "dic", "--method", "dic-pyramid", "--json"],
        )
        assert result.exit_code == 0
        payload = json.loads(result.output)
        assert payload["methods"]["dic"]["deterministic"]
        assert payload["methods"]["dic-pyramid"]["deterministic"]
        assert "pyramid_speedup" in payload


class TestExitCodes:
    def test_malformed_grid_exits_io(self, runner, tmp_path):
        bad = tmp_path / "bad.spgrid"
        bad.write_bytes(b"SPGRID1\nwidth=8\n")  # truncated header
        result = runner.invoke(
            main, ["track", "--ref", str(bad), "--sample", str(bad),
                   "--out", str(tmp_path / "o")],
        )
        assert result.exit_code == 3
