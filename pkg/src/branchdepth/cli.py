"""Command-line interface.

Subcommands: ``synth``, ``disparity``, ``localize``, ``eval``, ``eval-mask``.
Results go to stdout as JSON unless an output path is given; diagnostics go
to stderr.  Exit codes: 0 success, 1 I/O or parse failure, 2 validation
failure, 3 no valid data / undefined metric.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from branchdepth import fileio
from branchdepth.errors import (
    ConfigurationError,
    FileFormatError,
    MetricUndefinedError,
    NoValidDepthError,
)
from branchdepth.geometry import StereoRig
from branchdepth.localize import estimate_distance
from branchdepth.metrics import (
    MaskInstance,
    bad_pixel_rate,
    depth_histogram,
    map_50_95,
    mask_iou,
    rmse,
)
from branchdepth.pipeline import AGGREGATIONS, PipelineConfig, compute_disparity
from branchdepth.synth import branch_scene, render_pair, scene_from_dict, scene_to_dict

EXIT_OK = 0
EXIT_IO = 1
EXIT_VALIDATION = 2
EXIT_NO_DATA = 3

_MASK_THRESHOLD = 128


def _emit(result: dict, out: str | None) -> None:
    text = json.dumps(result, indent=2) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _default_rig(width: int, height: int) -> StereoRig:
    return StereoRig(fx=600.0, fy=600.0, ox=(width - 1) / 2, oy=(height - 1) / 2, baseline_m=0.1)


def cmd_synth(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    points = None
    if args.scene:
        spec = scene_from_dict(fileio.load_json(args.scene))
    else:
        if args.distance is None:
            raise ConfigurationError("synth needs either --distance or --scene")
        rig = fileio.read_rig(args.rig) if args.rig else _default_rig(args.width, args.height)
        spec, points = branch_scene(
            args.distance, rig, width=args.width, height=args.height,
            n_points=args.points, seed=args.seed,
        )
    result = render_pair(spec, spec.rig)
    fileio.write_pgm(out_dir / "left.pgm", result.left)
    fileio.write_pgm(out_dir / "right.pgm", result.right)
    fileio.write_disparity_pfm(out_dir / "gt.pfm", result.gt)
    fileio.write_pgm(out_dir / "occlusion.pgm", np.where(result.occlusion, 255.0, 0.0))
    written = ["left.pgm", "right.pgm", "gt.pfm", "occlusion.pgm"]
    if points is not None:
        fileio.write_points(out_dir / "points.json", points)
        written.append("points.json")
    _emit({"scene": scene_to_dict(spec), "out_dir": str(out_dir), "files": written}, None)
    return EXIT_OK


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    if args.config:
        config = PipelineConfig.from_dict(fileio.load_json(args.config))
    else:
        config = PipelineConfig()
    overrides = {
        "cost_kind": args.cost,
        "window_radius": args.window_radius,
        "d_min": args.d_min,
        "d_max": args.d_max,
        "aggregation": args.aggregation,
        "fixed_radius": args.fixed_radius,
        "p1": args.p1,
        "p2": args.p2,
        "energy_lam": args.energy_lam,
        "paths": args.paths,
        "lrc_tau": args.lrc_tau,
        "median_radius": args.median_radius,
        "wls_lam": args.wls_lam,
        "wls_sigma": args.wls_sigma,
        "wls_iterations": args.wls_iterations,
        "wls_tol": args.wls_tol,
    }
    data = config.to_dict()
    data.update({key: value for key, value in overrides.items() if value is not None})
    for flag, key in (
        (args.no_lrc, "lrc_enabled"),
        (args.no_median, "median_enabled"),
        (args.no_subpixel, "subpixel_enabled"),
        (args.no_wls, "wls_enabled"),
    ):
        if flag:
            data[key] = False
    return PipelineConfig.from_dict(data)


def cmd_disparity(args: argparse.Namespace) -> int:
    config = _load_config(args)
    left = fileio.read_pgm(args.left)
    right = fileio.read_pgm(args.right)
    disp = compute_disparity(left, right, config)
    fileio.write_disparity_pfm(args.out, disp)
    if args.preview:
        fileio.write_pgm(args.preview, fileio.disparity_preview(disp))
    _emit(
        {
            "output": str(args.out),
            "valid_pixels": int(disp.valid.sum()),
            "total_pixels": int(disp.valid.size),
            "config": config.to_dict(),
        },
        None,
    )
    return EXIT_OK


def cmd_localize(args: argparse.Namespace) -> int:
    disp = fileio.read_disparity_pfm(args.disparity)
    points = fileio.read_points(args.points)
    rig = fileio.read_rig(args.rig)
    estimate = estimate_distance(
        disp,
        rig,
        points,
        method=args.method,
        m=args.m,
        k=args.k,
        pattern_radius=args.pattern_radius,
        filter_outliers=not args.no_mad_filter,
    )
    result = estimate.as_dict()
    result["params"] = {
        "method": args.method,
        "k": args.k,
        "m": args.m,
        "pattern_radius": args.pattern_radius,
        "mad_filter": not args.no_mad_filter,
        "rig": {"fx": rig.fx, "fy": rig.fy, "ox": rig.ox, "oy": rig.oy, "baseline_m": rig.baseline_m},
        "n_points": int(len(points)),
    }
    _emit(result, args.out)
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    pred = fileio.read_disparity_pfm(args.pred)
    gt = fileio.read_disparity_pfm(args.gt)
    if pred.values.shape != gt.values.shape:
        raise FileFormatError(
            f"shape mismatch: pred {pred.values.shape} vs gt {gt.values.shape}"
        )
    both = pred.valid & gt.valid
    report = {
        "rmse": rmse(gt.values, pred.values),
        "bad_pixel_rate": bad_pixel_rate(pred, gt, args.tau),
        "tau": args.tau,
        "compared": int(both.sum()),
        "excluded": int(both.size - both.sum()),
    }
    if args.histogram_csv:
        samples = pred.values[pred.valid]
        if args.rig:
            rig = fileio.read_rig(args.rig)
            samples = rig.w / samples[samples > 0]
            report["histogram_unit"] = "metres"
        else:
            report["histogram_unit"] = "disparity_px"
        hist = depth_histogram(samples, bins=args.bins)
        with open(args.histogram_csv, "w", encoding="utf-8") as handle:
            handle.write("bin_lo,bin_hi,count\n")
            for lo, hi, count in hist.rows():
                handle.write(f"{lo},{hi},{count}\n")
        report["histogram_csv"] = str(args.histogram_csv)
        report["histogram_bins"] = len(hist.counts)
    _emit(report, args.out)
    return EXIT_OK


def _read_mask(path: str | Path) -> np.ndarray:
    return fileio.read_pgm(path) >= _MASK_THRESHOLD


def cmd_eval_mask(args: argparse.Namespace) -> int:
    if args.pred_manifest or args.gt_manifest:
        if not (args.pred_manifest and args.gt_manifest):
            raise ConfigurationError("mAP evaluation needs both --pred-manifest and --gt-manifest")
        pred_dir = Path(args.pred_manifest).parent
        gt_dir = Path(args.gt_manifest).parent
        pred_entries = fileio.load_json(args.pred_manifest).get("instances", [])
        gt_entries = fileio.load_json(args.gt_manifest).get("instances", [])
        predictions = [
            MaskInstance(mask=_read_mask(pred_dir / entry["mask"]), score=float(entry["score"]))
            for entry in pred_entries
        ]
        ground_truth = [_read_mask(gt_dir / entry["mask"]) for entry in gt_entries]
        interpolation = "trapezoid" if args.trapezoid else "coco101"
        report = {
            "map_50_95": map_50_95(predictions, ground_truth, interpolation=interpolation),
            "interpolation": interpolation,
            "predictions": len(predictions),
            "ground_truth": len(ground_truth),
        }
    else:
        if not (args.pred and args.gt):
            raise ConfigurationError("eval-mask needs two mask files or two manifests")
        report = {"iou": mask_iou(_read_mask(args.pred), _read_mask(args.gt))}
    _emit(report, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="branchdepth",
        description="Classical stereo matching and branch distance estimation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="render a synthetic stereo pair with ground truth")
    p_synth.add_argument("--distance", type=float, help="branch preset: branch distance in metres")
    p_synth.add_argument("--scene", help="scene description JSON (alternative to --distance)")
    p_synth.add_argument("--rig", help="rig JSON for the branch preset")
    p_synth.add_argument("--out-dir", required=True)
    p_synth.add_argument("--width", type=int, default=640)
    p_synth.add_argument("--height", type=int, default=480)
    p_synth.add_argument("--points", type=int, default=24)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.set_defaults(func=cmd_synth)

    p_disp = sub.add_parser("disparity", help="compute a refined disparity map")
    p_disp.add_argument("left")
    p_disp.add_argument("right")
    p_disp.add_argument("--out", required=True, help="output PFM path")
    p_disp.add_argument("--preview", help="optional 8-bit preview PGM")
    p_disp.add_argument("--config", help="pipeline config JSON; flags below override it")
    p_disp.add_argument("--cost", choices=("ad", "sd", "ncc"))
    p_disp.add_argument("--window-radius", type=int)
    p_disp.add_argument("--d-min", type=int)
    p_disp.add_argument("--d-max", type=int)
    p_disp.add_argument("--aggregation", choices=AGGREGATIONS)
    p_disp.add_argument("--fixed-radius", type=int)
    p_disp.add_argument("--p1", type=float)
    p_disp.add_argument("--p2", type=float)
    p_disp.add_argument("--energy-lam", type=float)
    p_disp.add_argument("--paths", type=int, choices=(4, 8))
    p_disp.add_argument("--lrc-tau", type=float)
    p_disp.add_argument("--median-radius", type=int)
    p_disp.add_argument("--wls-lam", type=float)
    p_disp.add_argument("--wls-sigma", type=float)
    p_disp.add_argument("--wls-iterations", type=int)
    p_disp.add_argument("--wls-tol", type=float)
    p_disp.add_argument("--no-lrc", action="store_true")
    p_disp.add_argument("--no-median", action="store_true")
    p_disp.add_argument("--no-subpixel", action="store_true")
    p_disp.add_argument("--no-wls", action="store_true")
    p_disp.set_defaults(func=cmd_disparity)

    p_loc = sub.add_parser("localize", help="estimate branch distance from a disparity map")
    p_loc.add_argument("disparity", help="disparity PFM")
    p_loc.add_argument("points", help="points JSON")
    p_loc.add_argument("rig", help="rig JSON")
    p_loc.add_argument("--method", choices=("centroid", "polygon"), default="centroid")
    p_loc.add_argument("--k", type=float, default=3.0)
    p_loc.add_argument("--m", type=int, default=4)
    p_loc.add_argument("--pattern-radius", type=float, default=2.0)
    p_loc.add_argument("--no-mad-filter", action="store_true")
    p_loc.add_argument("--out", help="result JSON path (default: stdout)")
    p_loc.set_defaults(func=cmd_localize)

    p_eval = sub.add_parser("eval", help="compare a disparity map against ground truth")
    p_eval.add_argument("pred")
    p_eval.add_argument("gt")
    p_eval.add_argument("--tau", type=float, default=1.0, help="bad-pixel threshold in pixels")
    p_eval.add_argument("--histogram-csv", help="also write a histogram of the prediction")
    p_eval.add_argument("--bins", type=int, default=10)
    p_eval.add_argument("--rig", help="rig JSON: histogram depths (metres) instead of disparities")
    p_eval.add_argument("--out", help="report JSON path (default: stdout)")
    p_eval.set_defaults(func=cmd_eval)

    p_mask = sub.add_parser("eval-mask", help="mask IoU, or mAP 50-95 from manifests")
    p_mask.add_argument("pred", nargs="?", help="predicted mask PGM")
    p_mask.add_argument("gt", nargs="?", help="ground-truth mask PGM")
    p_mask.add_argument("--pred-manifest", help='JSON {"instances": [{"mask": path, "score": s}]}')
    p_mask.add_argument("--gt-manifest", help='JSON {"instances": [{"mask": path}]}')
    p_mask.add_argument("--trapezoid", action="store_true", help="raw trapezoidal AP (diagnostic)")
    p_mask.add_argument("--out", help="report JSON path (default: stdout)")
    p_mask.set_defaults(func=cmd_eval_mask)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileFormatError, OSError) as exc:
        return _fail(exc, EXIT_IO)
    except (NoValidDepthError, MetricUndefinedError) as exc:
        return _fail(exc, EXIT_NO_DATA)
    except ValueError as exc:
        return _fail(exc, EXIT_VALIDATION)


def _fail(exc: Exception, code: int) -> int:
    sys.stdout.write(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}) + "\n")
    print(f"error: {exc}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
