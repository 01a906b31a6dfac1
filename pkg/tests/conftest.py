"""Shared fixtures: the heavy tracking and pipeline scenarios are computed
once per session and reused by both the module tests and the acceptance
suite."""

import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import specklekit as sk


def smooth_sinusoid_field(size: int, amp: float) -> sk.VectorField2D:
    ys, xs = np.mgrid[0:size, 0:size].astype(float)
    dx = amp * np.sin(2 * np.pi * ys / size) * np.cos(2 * np.pi * xs / size)
    dy = amp * np.cos(2 * np.pi * ys / size) * np.sin(2 * np.pi * xs / size)
    return sk.VectorField2D(dx, dy)


def gentle_benchmark_field(size: int) -> sk.VectorField2D:
    """Low-gradient smooth field: a ramp plus a long-wavelength ripple,
    peak magnitude ~4.3 px."""
    ys, xs = np.mgrid[0:size, 0:size].astype(float)
    dx = 3.0 * ys / size + 0.5 * np.sin(2 * np.pi * xs / size)
    dy = 3.0 * xs / size + 0.5 * np.cos(2 * np.pi * ys / size)
    return sk.VectorField2D(dx, dy)


def warp_pair(ref: sk.Image2D, field: sk.VectorField2D):
    """Sample image for a pure displacement field (unit transmission)."""
    ones = sk.Image2D(np.ones_like(ref.data), ref.pixel_pitch)
    zeros = sk.Image2D(np.zeros_like(ref.data), ref.pixel_pitch)
    truth = sk.SampleTruth(zeros, ones, field, 0.0, 0.0, False)
    return sk.warp_apply(ref, truth)


def vector_rms(dx_err: np.ndarray, dy_err: np.ndarray) -> float:
    return float(np.sqrt(np.mean(dx_err**2 + dy_err**2)))


@pytest.fixture(scope="session")
def tracking_scenario():
    """512x512 noiseless tracking benchmark on a fine-pitch speckle pattern.

    The mask pitch (2 px) keeps the pattern free of the coarse-pitch
    self-similarity that can alias a full search, and the 13x13 template
    suits the pattern correlation length; both are scenario constants,
    not library defaults.
    """
    size = 512
    seed = sk.SeedContext(2024)
    mask = sk.generate_coded_mask(size, 2, seed.child("mask"))
    ref = sk.render_reference(mask)
    field = gentle_benchmark_field(size)
    sample = warp_pair(ref, field)
    cfg = sk.TrackConfig(template_half=6)

    t0 = time.perf_counter()
    full = sk.dic_track_full(ref, sample, cfg)
    t_full = time.perf_counter() - t0
    t0 = time.perf_counter()
    pyramid = sk.dic_track_pyramid(ref, sample, cfg)
    t_pyramid = time.perf_counter() - t0

    return {
        "size": size,
        "ref": ref,
        "sample": sample,
        "field": field,
        "cfg": cfg,
        "full": full,
        "pyramid": pyramid,
        "t_full": t_full,
        "t_pyramid": t_pyramid,
    }


@pytest.fixture(scope="session")
def pipeline_scenario():
    """Truth -> displacement -> tracking -> integration, 512x512, no noise.

    The synthetic phase is kept smooth (wide structure blur) and scaled so
    the peak displacement stays inside the tracker's search window.
    """
    size = 512
    synth = sk.SynthConfig(
        noise_blur_px=101,
        phase_scale_range=(2 * np.pi, 2 * np.pi),
    )
    seed = sk.SeedContext(77)
    ref, sample, truth = sk.make_pair(
        seed.child("mask"), seed.child("sample"), synth, size=size, mask_pitch_px=2
    )
    peak = max(np.abs(truth.displacement.dx).max(), np.abs(truth.displacement.dy).max())
    assert peak <= 8.0, f"scenario displacement {peak:.2f}px exceeds the search window"
    cfg = sk.TrackConfig(template_half=6, min_score=0.8)
    result = sk.dic_track_pyramid(ref, sample, cfg)
    geom = sk.GeometryConfig(
        wavelength=synth.wavelength,
        mask_to_sample=synth.mask_to_sample,
        mask_to_camera=synth.mask_to_camera,
        pixel_pitch=synth.pixel_pitch,
    )
    gx, gy = sk.displacement_to_gradient(result.displacement, geom)
    phase = sk.integrate_gradients(gx, gy)
    return {
        "size": size,
        "synth": synth,
        "truth": truth,
        "ref": ref,
        "sample": sample,
        "result": result,
        "phase": phase,
        "geom": geom,
    }
