"""Command-line interface.

Exit codes: 0 success, 2 parameter error, 3 I/O or file-format error,
4 verification failure.
"""

from __future__ import annotations

import functools
import json
import statistics
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import click
import numpy as np

from . import dataset as ds
from .costvol import FeatureStack, build_cost_volume, multiscale_costvol_track, warp_features
from .dic import TrackConfig, dic_track_full, dic_track_pyramid, transmission_recover
from .errors import GridFormatError, ParameterError, VerificationError
from .grid import Image2D, SeedContext, VectorField2D
from .gridio import GridHeader, file_digest, read_image, write_grid, write_image
from .optics import OpticsConfig, generate_coded_mask
from .phase import (
    GeometryConfig,
    displacement_to_gradient,
    fit_paraboloid,
    gradient_curl_rms,
    integrate_gradients,
    relative_l2_loss,
)
from .synth import SynthConfig, make_pair

EXIT_PARAMETER = 2
EXIT_IO = 3
EXIT_VERIFICATION = 4


def _guard(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ParameterError as exc:
            click.echo(f"parameter error: {exc}", err=True)
            sys.exit(EXIT_PARAMETER)
        except GridFormatError as exc:
            click.echo(f"grid format error: {exc}", err=True)
            sys.exit(EXIT_IO)
        except OSError as exc:
            click.echo(f"i/o error: {exc}", err=True)
            sys.exit(EXIT_IO)
        except VerificationError as exc:
            click.echo(f"verification failed: {exc}", err=True)
            sys.exit(EXIT_VERIFICATION)

    return wrapper


def _load_config(path) -> dict:
    if path is None:
        return {}
    return json.loads(Path(path).read_text())


def _merged(cls, section: dict, overrides: dict):
    cfg = cls(**section) if section else cls()
    return replace(cfg, **overrides) if overrides else cfg


def _explicit(ctx, names: dict) -> dict:
    """Keep only options the user actually typed on the command line."""
    out = {}
    for param, field in names.items():
        source = ctx.get_parameter_source(param)
        if source is not None and source.name == "COMMANDLINE":
            out[field] = ctx.params[param]
    return out


def _emit(summary: dict, as_json: bool):
    if as_json:
        click.echo(json.dumps(summary, indent=1, sort_keys=True))
    else:
        for key, value in summary.items():
            click.echo(f"{key}: {value}")


@click.group()
def main():
    """Speckle-based phase-contrast imaging toolkit."""


@main.command()
@click.option("--size", default=512, show_default=True, help="Pattern size in pixels.")
@click.option("--pitch-px", default=8, show_default=True, help="Mask pitch in pixels.")
@click.option("--pitch-um", default=0.65, show_default=True, help="Detector pixel pitch in um.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--json", "as_json", is_flag=True)
@_guard
def mask(size, pitch_px, pitch_um, seed, out, as_json):
    """Generate a coded binary mask pattern grid."""
    coded = generate_coded_mask(size, pitch_px, SeedContext(seed), pitch_um * 1e-6)
    write_image(out, coded.pattern, "intensity")
    _emit(
        {
            "out": out,
            "size": size,
            "pitch_px": pitch_px,
            "coarse_cells": int(coded.coarse.size),
            "coarse_ones": int(coded.coarse.sum()),
            "digest": file_digest(out),
        },
        as_json,
    )


@main.command()
@click.option("--count", required=True, type=int)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--size", default=512, show_default=True)
@click.option("--pitch-px", default=8, show_default=True)
@click.option("--noise-sigma", default=0.0, show_default=True)
@click.option("--threads", default=1, show_default=True)
@click.option("--verify", is_flag=True, help="Audit the generated pairs after writing.")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@_guard
def dataset(ctx, count, seed, out, size, pitch_px, noise_sigma, threads, verify, config, as_json):
    """Generate a reproducible reference/sample/truth corpus."""
    sections = _load_config(config)
    synth = _merged(
        SynthConfig, sections.get("synth", {}), _explicit(ctx, {"noise_sigma": "noise_sigma"})
    )
    optics = _merged(OpticsConfig, sections.get("optics", {}), {})
    t0 = time.perf_counter()
    manifest = ds.generate_dataset(
        out, count, seed, size=size, mask_pitch_px=pitch_px,
        synth=synth, optics=optics, threads=threads,
    )
    elapsed = time.perf_counter() - t0
    summary = {
        "out": out,
        "count": count,
        "train": len(manifest["split"]["train"]),
        "validation": len(manifest["split"]["validation"]),
        "seconds": round(elapsed, 3),
    }
    if verify:
        report = ds.verify_dataset(out)
        summary["verified_pairs"] = report["pairs_checked"]
        summary["forward_model_checked"] = report["forward_model_checked"]
    _emit(summary, as_json)


@main.command("verify-dataset")
@click.option("--dir", "dataset_dir", required=True, type=click.Path(file_okay=False, exists=True))
@click.option("--json", "as_json", is_flag=True)
@_guard
def verify_dataset_cmd(dataset_dir, as_json):
    """Audit an existing dataset directory against its manifest."""
    report = ds.verify_dataset(dataset_dir)
    _emit(report, as_json)


def _write_track_outputs(out_dir, pitch, dx, dy, t, score):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, array, semantic in (
        ("dx", dx, "disp_px_x"),
        ("dy", dy, "disp_px_y"),
        ("transmission", t, "transmission"),
        ("score", score, "feature"),
    ):
        path = out / f"{name}.spgrid"
        write_grid(
            path,
            GridHeader(
                width=array.shape[1], height=array.shape[0], channels=1,
                pixel_pitch_m=pitch, semantic=semantic,
            ),
            array.astype("<f4"),
        )
        paths[name] = str(path)
    return paths


@main.command()
@click.option("--ref", "ref_path", required=True, type=click.Path(exists=True))
@click.option("--sample", "sample_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option(
    "--method",
    type=click.Choice(["dic", "dic-pyramid", "costvol"]),
    default="dic-pyramid",
    show_default=True,
)
@click.option("--template-half", default=3, show_default=True)
@click.option("--search-half", default=10, show_default=True)
@click.option("--levels", default=4, show_default=True, help="Pyramid levels.")
@click.option("--level-search-half", default=3, show_default=True)
@click.option("--subpixel", type=click.Choice(["parabolic", "none"]), default="parabolic")
@click.option("--stride", default=1, show_default=True)
@click.option("--costvol-range", default=3, show_default=True)
@click.option("--min-score", default=0.0, show_default=True,
              help="Mark pixels with a lower peak score invalid.")
@click.option("--threads", default=1, show_default=True)
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@_guard
def track(
    ctx, ref_path, sample_path, out, method, template_half, search_half, levels,
    level_search_half, subpixel, stride, costvol_range, min_score, threads, config, as_json,
):
    """Recover displacement and transmission from a reference/sample pair."""
    sections = _load_config(config)
    cfg = _merged(
        TrackConfig,
        sections.get("track", {}),
        _explicit(
            ctx,
            {
                "template_half": "template_half",
                "search_half": "search_half",
                "levels": "pyramid_levels",
                "level_search_half": "level_search_half",
                "subpixel": "subpixel",
                "stride": "stride",
                "min_score": "min_score",
            },
        ),
    )
    ref = read_image(ref_path)
    sample = read_image(sample_path)
    if (ref.width, ref.height) != (sample.width, sample.height):
        raise ParameterError("reference and sample dimensions differ")

    t0 = time.perf_counter()
    summary = {"method": method, "config": asdict(cfg)}
    if method == "dic":
        result = dic_track_full(ref, sample, cfg, threads=threads)
        disp, score = result.displacement, result.peak_score.data
        summary["valid_fraction"] = round(result.valid_fraction, 6)
    elif method == "dic-pyramid":
        result = dic_track_pyramid(ref, sample, cfg, threads=threads)
        disp, score = result.displacement, result.peak_score.data
        summary["valid_fraction"] = round(result.valid_fraction, 6)
    else:
        disp = multiscale_costvol_track(ref, sample, num_levels=levels, search_range=costvol_range)
        warped = warp_features(FeatureStack.from_image(ref), disp)
        vol = build_cost_volume(warped, FeatureStack.from_image(sample), costvol_range)
        score = vol.scores.max(axis=0)
        summary["cost_volume_planes"] = int(vol.plane_count)
        summary["valid_fraction"] = 1.0
    trans = transmission_recover(ref, sample, disp)
    elapsed = time.perf_counter() - t0

    paths = _write_track_outputs(out, ref.pixel_pitch, disp.dx, disp.dy, trans.data, score)
    summary.update(
        {
            "seconds": round(elapsed, 3),
            "outputs": paths,
            "digests": {name: file_digest(path) for name, path in paths.items()},
        }
    )
    _emit(summary, as_json)


def _write_pgm(path, array: np.ndarray) -> None:
    lo, hi = float(array.min()), float(array.max())
    scaled = np.zeros_like(array) if hi <= lo else (array - lo) / (hi - lo)
    img8 = np.round(255.0 * scaled).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{array.shape[1]} {array.shape[0]}\n255\n".encode("ascii"))
        fh.write(img8.tobytes())


@main.command()
@click.option("--dx", "dx_path", required=True, type=click.Path(exists=True))
@click.option("--dy", "dy_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--wavelength-nm", default=0.0886, show_default=True,
              help="X-ray wavelength (default matches 14 keV).")
@click.option("--distance-m", default=0.628, show_default=True,
              help="Sample-to-camera distance.")
@click.option("--pitch-um", default=0.65, show_default=True)
@click.option("--plot", is_flag=True, help="Also write a portable graymap preview.")
@click.option("--config", type=click.Path(exists=True), default=None)
@click.option("--json", "as_json", is_flag=True)
@click.pass_context
@_guard
def integrate(ctx, dx_path, dy_path, out, wavelength_nm, distance_m, pitch_um, plot, config, as_json):
    """Convert displacement grids to an integrated phase grid."""
    sections = _load_config(config)
    overrides = {}
    explicit = _explicit(
        ctx,
        {"wavelength_nm": "wavelength", "distance_m": "mask_to_camera", "pitch_um": "pixel_pitch"},
    )
    if "wavelength" in explicit:
        overrides["wavelength"] = explicit["wavelength"] * 1e-9
    if "mask_to_camera" in explicit:
        overrides["mask_to_camera"] = explicit["mask_to_camera"]
    if "pixel_pitch" in explicit:
        overrides["pixel_pitch"] = explicit["pixel_pitch"] * 1e-6
    section = sections.get("geometry", {})
    if not section and not overrides:
        overrides = {
            "wavelength": wavelength_nm * 1e-9,
            "mask_to_camera": distance_m,
            "pixel_pitch": pitch_um * 1e-6,
        }
    geom = _merged(GeometryConfig, section, overrides)

    dx_img = read_image(dx_path)
    dy_img = read_image(dy_path)
    disp = VectorField2D(dx_img.data, dy_img.data)
    gx, gy = displacement_to_gradient(disp, geom)
    phase = integrate_gradients(gx, gy)
    write_image(out, Image2D(phase.data, geom.pixel_pitch), "phase_rad")
    summary = {
        "out": out,
        "wavelength_nm": geom.wavelength * 1e9,
        "distance_m": geom.mask_to_camera - geom.mask_to_sample,
        "pitch_um": geom.pixel_pitch * 1e6,
        "phase_rms_rad": float(np.sqrt(np.mean(phase.data**2))),
        "curl_rms": gradient_curl_rms(gx, gy),
        "digest": file_digest(out),
    }
    if plot:
        pgm = str(Path(out).with_suffix(".pgm"))
        _write_pgm(pgm, phase.data)
        summary["plot"] = pgm
    _emit(summary, as_json)


@main.command()
@click.option("--phase", "phase_path", required=True, type=click.Path(exists=True))
@click.option("--aperture-um", default=800.0, show_default=True,
              help="Aperture diameter in micrometers.")
@click.option("--center", default=None, help="Aperture center 'x,y' in pixels.")
@click.option("--json", "as_json", is_flag=True)
@_guard
def lens(phase_path, aperture_um, center, as_json):
    """Fit and subtract the best paraboloid from a phase grid."""
    img = read_image(phase_path)
    radius_px = aperture_um * 1e-6 / 2.0 / img.pixel_pitch
    hint = None
    if center is not None:
        parts = center.split(",")
        if len(parts) != 2:
            raise ParameterError("--center must be 'x,y'")
        hint = (float(parts[0]), float(parts[1]))
    fit = fit_paraboloid(img, radius_px, hint)
    _emit(
        {
            "aperture_um": aperture_um,
            "aperture_radius_px": round(radius_px, 3),
            "center_x_px": fit.center_x,
            "center_y_px": fit.center_y,
            "curvature_x_rad_per_px2": fit.curvature_x,
            "curvature_y_rad_per_px2": fit.curvature_y,
            "offset_rad": fit.offset,
            "residual_rms_rad": fit.residual_rms,
            "residual_rms_waves": fit.residual_rms / (2 * np.pi),
        },
        as_json,
    )


@main.command()
@click.option("--pred-dx", required=True, type=click.Path(exists=True))
@click.option("--pred-dy", required=True, type=click.Path(exists=True))
@click.option("--pred-t", required=True, type=click.Path(exists=True))
@click.option("--truth-dx", required=True, type=click.Path(exists=True))
@click.option("--truth-dy", required=True, type=click.Path(exists=True))
@click.option("--truth-t", required=True, type=click.Path(exists=True))
@click.option(
    "--fail-above",
    type=click.Choice(["low", "medium", "high"]),
    default="high",
    show_default=True,
    help="Exit with code 4 if the regime exceeds this level.",
)
@click.option("--json", "as_json", is_flag=True)
@_guard
def metrics(pred_dx, pred_dy, pred_t, truth_dx, truth_dy, truth_t, fail_above, as_json):
    """Relative squared errors of predicted displacement/transmission grids."""
    pred = (
        VectorField2D(read_image(pred_dx).data, read_image(pred_dy).data),
        read_image(pred_t),
    )
    truth = (
        VectorField2D(read_image(truth_dx).data, read_image(truth_dy).data),
        read_image(truth_t),
    )
    report = relative_l2_loss(pred, truth)
    _emit(
        {
            "term_dx": report.term_dx,
            "term_dy": report.term_dy,
            "term_t": report.term_t,
            "total": report.total,
            "percent_error": report.percent_error,
            "regime": report.regime,
            "notes": list(report.notes),
        },
        as_json,
    )
    order = ("low", "medium", "high")
    if order.index(report.regime) > order.index(fail_above):
        raise VerificationError(
            f"error regime {report.regime} exceeds threshold {fail_above}"
        )


@main.command()
@click.option("--size", default=256, show_default=True)
@click.option(
    "--method",
    "methods",
    multiple=True,
    type=click.Choice(["dic", "dic-pyramid", "costvol"]),
    default=("dic", "dic-pyramid"),
    show_default=True,
)
@click.option("--levels", default=4, show_default=True, help="Pyramid levels.")
@click.option("--threads", default=8, show_default=True)
@click.option("--repeats", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--json", "as_json", is_flag=True)
@_guard
def bench(size, methods, levels, threads, repeats, seed, as_json):
    """Time the analyzers and assert thread-count determinism."""
    root = SeedContext(seed)
    synth = SynthConfig(phase_scale_range=(4 * np.pi, 4 * np.pi), noise_blur_px=21)
    ref, sample, _ = make_pair(
        root.child("bench-mask"), root.child("bench-sample"), synth, size=size
    )
    cfg = TrackConfig(pyramid_levels=levels)

    def run(method, nthreads):
        if method == "dic":
            result = dic_track_full(ref, sample, cfg, threads=nthreads)
            disp = result.displacement
        elif method == "dic-pyramid":
            result = dic_track_pyramid(ref, sample, cfg, threads=nthreads)
            disp = result.displacement
        else:
            disp = multiscale_costvol_track(ref, sample, num_levels=levels)
        return disp

    summary = {"size": size, "threads": threads, "repeats": repeats, "methods": {}}
    for method in methods:
        times = []
        disp = None
        for _ in range(repeats):
            t0 = time.perf_counter()
            disp = run(method, 1)
            times.append(time.perf_counter() - t0)
        digest_1 = ds.np_digest(disp)
        disp_n = run(method, threads)
        digest_n = ds.np_digest(disp_n)
        summary["methods"][method] = {
            "median_seconds": round(statistics.median(times), 4),
            "digest_threads_1": digest_1,
            f"digest_threads_{threads}": digest_n,
            "deterministic": digest_1 == digest_n,
        }
        if digest_1 != digest_n:
            raise VerificationError(f"{method}: thread counts 1 and {threads} disagree")
    if "dic" in summary["methods"] and "dic-pyramid" in summary["methods"]:
        full = summary["methods"]["dic"]["median_seconds"]
        pyr = summary["methods"]["dic-pyramid"]["median_seconds"]
        summary["pyramid_speedup"] = round(full / pyr, 2) if pyr > 0 else float("inf")
    _emit(summary, as_json)


if __name__ == "__main__":
    main()
