"""Command-line entry point: ``lsgd-lcd {segment,detect,eval,sweep,fixture}``."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import tempfile
import time
from dataclasses import replace
from pathlib import Path

from .core import (
    ConfigError, InputError, Mode, build_configs, config_snapshot, load_config_file,
)
from .dataset import DEFAULT_TOLERANCE, LoadError, load_ground_truth, load_sequence, read_image
from .evaluation import DEFAULT_OMEGA, EvalError, evaluate, write_report
from .fixture import FixtureSpec, write_fixture
from .pipeline import LoopDetector, RunError, read_detection_log, write_detection_log
from .segmentation import grid_shape, segment, write_centers_csv, write_label_image

# global flag -> config key
_FLAG_KEYS = {
    "sp": "sp",
    "alpha": "alpha",
    "beta": "beta",
    "mode": "mode",
    "temporal_gap": "temporal_gap",
    "top_n": "top_n",
    "accept_threshold": "accept_threshold",
    "intensity_norm": "intensity_norm",
    "spatial_norm": "spatial_norm",
    "max_iters": "max_iters",
}


class UsageError(ValueError):
    pass


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", help="key=value config file; flags override it")
    g.add_argument("--sp", type=int, help="segmentation scale in pixels")
    g.add_argument("--alpha", type=float, help="first-member similarity gate")
    g.add_argument("--beta", type=float, help="node-average similarity gate")
    g.add_argument("--mode", choices=["exhaustive", "nodes"])
    g.add_argument("--temporal-gap", type=int, help="recent frames excluded from candidacy")
    g.add_argument("--top-n", type=int)
    g.add_argument("--accept-threshold", type=float)
    g.add_argument("--intensity-norm", type=float)
    g.add_argument("--spatial-norm", type=float)
    g.add_argument("--max-iters", type=int)
    g.add_argument("--omega", type=float, default=None, help=f"PRT weight (default {DEFAULT_OMEGA})")
    g.add_argument("--tolerance", type=int, default=None,
                   help=f"ground-truth frame tolerance (default {DEFAULT_TOLERANCE})")
    g.add_argument("--out", default=".", help="output directory")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("-v", "--verbose", action="store_true", help="print a frame counter")
    return p


def configs_from_args(args, base: dict | None = None):
    values = dict(base or {})
    if args.config:
        values.update(load_config_file(args.config))
    for attr, key in _FLAG_KEYS.items():
        v = getattr(args, attr, None)
        if v is not None:
            values[key] = v
    return build_configs(values)


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _progress(verbose: bool, total: int):
    if not verbose:
        return None

    def tick(i):
        if i % 50 == 0 or i == total:
            print(f"\rframe {i}/{total}", end="\n" if i == total else "", file=sys.stderr)

    return tick


def cmd_segment(args) -> int:
    seg_cfg, _ = configs_from_args(args)
    image = read_image(args.image)
    seg_cfg.check_image(image.width, image.height)
    seg = segment(image, seg_cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_label_image(seg, out / "labels.png")
    write_centers_csv(seg, out / "centers.csv")
    print(f"M={seg.m_rows} N={seg.n_cols} cells={seg.n_cells} "
          f"iterations={seg.iterations} energy={seg.energy:.6f}")
    return 0


def _detect(manifest, seg_cfg, pipe_cfg, out: Path, verbose=False, images=None) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    det = LoopDetector(seg_cfg, pipe_cfg)
    tick = _progress(verbose, len(manifest))
    source = images if images is not None else manifest.images()
    for i, (fid, image) in enumerate(source):
        try:
            det.process_frame(image, fid)
        except (RunError, InputError, ConfigError) as exc:
            raise RunError(f"{manifest.frames[fid][1]}: {exc}") from None
        if tick:
            tick(i + 1)
    write_detection_log(det.results, out / "detections.csv")
    m, n = grid_shape(manifest.width, manifest.height, seg_cfg.sp)
    info = {
        "dataset_root": str(Path(manifest.root).resolve()),
        "mode": pipe_cfg.mode.value,
        "config": config_snapshot(seg_cfg, pipe_cfg),
        "output_dir": str(out.resolve()),
        "frames": len(det.results),
        "width": manifest.width,
        "height": manifest.height,
        "cells": m * n,
        "wall_clock_s": time.perf_counter() - t0,
    }
    if pipe_cfg.mode is Mode.NODES:
        det.db.save(out)
        count, sizes = det.db.node_stats()
        info["node_count"] = count
        info["node_sizes"] = {str(k): v for k, v in sizes.items()}
    _atomic_write(out / "manifest.json", json.dumps(info, indent=2) + "\n")
    return info


def cmd_detect(args) -> int:
    base = None
    root = args.root
    if args.replay:
        recorded = json.loads(Path(args.replay).read_text())
        base = recorded["config"]
        root = root or recorded["dataset_root"]
    if root is None:
        raise UsageError("detect needs a dataset root or --replay manifest")
    seg_cfg, pipe_cfg = configs_from_args(args, base)
    manifest = load_sequence(root)
    seg_cfg.check_image(manifest.width, manifest.height)
    info = _detect(manifest, seg_cfg, pipe_cfg, Path(args.out), args.verbose)
    line = f"frames={info['frames']} mode={info['mode']} wall_clock_s={info['wall_clock_s']:.3f}"
    if "node_count" in info:
        line += f" nodes={info['node_count']}"
    print(line)
    return 0


def _eval_gap(args, log_path: Path) -> int:
    if args.temporal_gap is not None:
        return args.temporal_gap
    recorded = log_path.parent / "manifest.json"
    if recorded.exists():
        return int(json.loads(recorded.read_text())["config"]["temporal_gap"])
    return build_configs({})[1].temporal_gap


def cmd_eval(args) -> int:
    log_path = Path(args.log)
    rows = read_detection_log(log_path)
    tol = DEFAULT_TOLERANCE if args.tolerance is None else args.tolerance
    gt = load_ground_truth(args.gt, tolerance=tol)
    omega = DEFAULT_OMEGA if args.omega is None else args.omega
    report = evaluate(rows, gt, _eval_gap(args, log_path), omega)
    write_report(report, args.out)
    print(report.summary_line())
    return 0


SWEEP_COLUMNS = ["param", "value", "cells", "node_count", "mean_time_ms", "mean_retrieval_ms",
                 "auc", "r@1", "r@5", "r@10", "prt"]


def _parse_values(text: str, param: str):
    items = [v.strip() for v in (text or "").split(",") if v.strip()]
    if not items:
        raise UsageError("sweep needs at least one value")
    cast = int if param == "sp" else float
    try:
        return [cast(v) for v in items]
    except ValueError:
        raise UsageError(f"bad value list {text!r} for {param}") from None


def cmd_sweep(args) -> int:
    values = _parse_values(args.values, args.param)
    seg_cfg, pipe_cfg = configs_from_args(args)
    if args.param == "beta":
        pipe_cfg = replace(pipe_cfg, mode=Mode.NODES)
    manifest = load_sequence(args.root)
    gt_path = Path(args.gt) if args.gt else Path(args.root) / "ground_truth.csv"
    tol = DEFAULT_TOLERANCE if args.tolerance is None else args.tolerance
    gt = load_ground_truth(gt_path, tolerance=tol, n_frames=len(manifest))
    omega = DEFAULT_OMEGA if args.omega is None else args.omega
    images = [(fid, manifest.load(fid)) for fid, _ in manifest.frames]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows = []
    for v in values:
        if args.param == "sp":
            s_cfg, p_cfg = build_configs({"sp": v}, seg_cfg, pipe_cfg)
        else:
            s_cfg, p_cfg = seg_cfg, replace(pipe_cfg, beta=v)
        try:
            s_cfg.check_image(manifest.width, manifest.height)
            info = _detect(manifest, s_cfg, p_cfg, out / f"{args.param}_{v}", args.verbose, images)
            log = read_detection_log(out / f"{args.param}_{v}" / "detections.csv")
            report = evaluate(log, gt, p_cfg.temporal_gap, omega)
        except (ValueError, OSError, RunError) as exc:
            raise RunError(f"sweep {args.param}={v}: {exc}") from None
        write_report(report, out / f"{args.param}_{v}")
        r = report.recall_at
        rows.append([args.param, v, info["cells"], info.get("node_count", ""),
                     report.mean_time_ms, report.mean_retrieval_ms, report.auc,
                     r[1], r[5], r[10], report.prt])
        print(f"{args.param}={v} cells={info['cells']} nodes={info.get('node_count', '-')} "
              + report.summary_line())
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_COLUMNS)
        w.writerows(rows)
    return 0


def cmd_fixture(args) -> int:
    sources = None
    if args.sources:
        sources = tuple(int(s) for s in args.sources.split(",") if s.strip())
    spec = FixtureSpec(
        frames=args.frames, revisits=args.revisits, noise=args.noise,
        width=args.width, height=args.height, groups=args.groups, spread=args.spread,
        seed=args.seed, sources=sources,
    )
    try:
        gt = write_fixture(spec, args.root)
    except OSError as exc:
        raise RunError(f"cannot write fixture to {args.root}: {exc}") from None
    print(f"wrote {spec.frames + spec.revisits} frames and {len(gt.positives)} "
          f"ground-truth pairs to {args.root}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(
        prog="lsgd-lcd",
        description="Loop-closure detection with superpixel-grid intensity histograms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", parents=[common], help="segment one image, export debug files")
    p.add_argument("image")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("detect", parents=[common], help="run detection over a sequence")
    p.add_argument("root", nargs="?")
    p.add_argument("--replay", help="manifest.json of an earlier run to reproduce")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval", parents=[common], help="score a detection log")
    p.add_argument("log")
    p.add_argument("gt")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], help="detect + eval over a parameter list")
    p.add_argument("root")
    p.add_argument("--param", choices=["sp", "beta"], required=True)
    p.add_argument("--values", required=True, help="comma-separated list")
    p.add_argument("--gt", help="ground truth (default ROOT/ground_truth.csv)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fixture", parents=[common], help="write a synthetic sequence")
    p.add_argument("root")
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--revisits", type=int, default=0)
    p.add_argument("--noise", type=int, default=0)
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--groups", type=int, default=0)
    p.add_argument("--spread", type=int, default=24)
    p.add_argument("--sources", help="comma-separated source frame per revisit")
    p.set_defaults(func=cmd_fixture)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (ConfigError, InputError, LoadError, EvalError, RunError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
