"""Command-line entry point: ``objmap run-sim | replay | bench``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .bench import compare_search, run_bench
from .config import ConfigError, RunConfig, load_config
from .formats import (LogFormatError, metrics_csv, read_detection_log, timing_csv, write_detection_log,
                      write_report, write_snapshot)
from .pipeline import process_frames
from .sim import approach_trajectory, generate_scene, run_trajectory
from .store import OutcomeKind

log = logging.getLogger("objmap")


def _angle_tag(angle: float) -> str:
    return f"angle{angle:g}"


def cmd_run_sim(cfg: RunConfig) -> int:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    intr = cfg.intrinsics()
    summary = []
    for angle in cfg.angles:
        scene = generate_scene(cfg.n_objects, cfg.seed, intrinsics=intr)
        traj = approach_trajectory(scene.objects[0].position, angle, cfg.start_distance,
                                   cfg.end_distance, cfg.step)
        report = run_trajectory(scene, traj, cfg.noise_model(), cfg.make_store())
        tag = _angle_tag(angle)
        with open(out / f"detections_{tag}.jsonl", "w") as fh:
            write_detection_log(report.frames, fh)
        with open(out / f"report_{tag}.jsonl", "w") as fh:
            write_report(report, scene, fh)
        with open(out / f"snapshot_{tag}.jsonl", "w") as fh:
            write_snapshot(report.snapshot, fh)
        (out / f"metrics_{tag}.csv").write_text(metrics_csv(report))
        (out / f"timing_{tag}.csv").write_text(timing_csv(report))
        classes = sorted(c or "" for c in report.final_classes.values())
        summary.append([f"{angle:g}", report.correct[0], ";".join(classes), len(report.snapshot)])
        print(f"angle {angle:g}: target maintained as {report.final_classes[0]!r} "
              f"(correct={report.correct[0]}), {len(report.snapshot)} records")
    with open(out / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["angle", "target_correct", "final_classes", "records"])
        writer.writerows(summary)
    return 0


def cmd_replay(log_path: str, cfg: RunConfig) -> int:
    try:
        with open(log_path) as fh:
            frames = read_detection_log(fh)
    except OSError as exc:
        print(f"error: cannot read {log_path}: {exc.strerror}", file=sys.stderr)
        return 2
    except LogFormatError as exc:
        print(f"error: {log_path}: {exc}", file=sys.stderr)
        return 2
    store = cfg.make_store()
    results = process_frames(store, frames, cfg.intrinsics(), project=False)
    outcomes = [o for r in results for o in r.outcomes]
    skipped = [o for o in outcomes if o.kind is OutcomeKind.SKIPPED]
    for o in skipped:
        log.warning("skipped detection: %s", o.reason)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "snapshot.jsonl", "w") as fh:
        write_snapshot(store.snapshot(), fh)
    print(f"frames={len(frames)} detections={len(outcomes)} skipped={len(skipped)} records={len(store)}")
    return 0


def cmd_bench(cfg: RunConfig) -> int:
    rows = run_bench(cfg.bench_store_sizes, cfg.bench_detections, cfg.bench_frames, cfg.seed,
                     store_factory=cfg.make_store, intr=cfg.intrinsics())
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "bench.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["store_size", "detections", "frames", "median_us", "p99_us"])
        print(f"{'store':>8} {'dets':>5} {'median ms':>10} {'p99 ms':>8}")
        for r in rows:
            writer.writerow([r.store_size, r.detections, r.frames, f"{r.median_us:.1f}", f"{r.p99_us:.1f}"])
            print(f"{r.store_size:>8} {r.detections:>5} {r.median_us / 1000:>10.3f} {r.p99_us / 1000:>8.3f}")
    size, n_det = max(cfg.bench_store_sizes), max(cfg.bench_detections)
    ref = cfg.make_store()
    cmp = compare_search(size, n_det, min(cfg.bench_frames, 30), cfg.seed, intr=cfg.intrinsics(),
                         depth_range=ref.depth_range, weights=ref.weights,
                         iou_threshold=cfg.iou_threshold, k=cfg.k, policy=cfg.policy)
    print(f"knn vs exhaustive at {size} records, {n_det} detections: "
          f"{cmp.knn_median_us / 1000:.3f} ms vs {cmp.exhaustive_median_us / 1000:.3f} ms, "
          f"identical outcomes={cmp.identical}")
    return 0


def _common(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="flat JSON file of RunConfig keys")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--iou-threshold", dest="iou_threshold", type=float)
    parser.add_argument("--k", type=int)
    parser.add_argument("--policy", choices=["objectness", "max_probability", "last_wins"])
    parser.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="objmap", description="Object map maintenance with objectness scores")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run-sim", help="simulate approach trajectories")
    _common(p)
    p = sub.add_parser("replay", help="replay a detection log")
    p.add_argument("log", help="line-delimited detection log")
    _common(p)
    p = sub.add_parser("bench", help="per-frame latency benchmark")
    _common(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    overrides = {k: getattr(args, k) for k in ("seed", "alpha", "iou_threshold", "k", "policy", "out")}
    try:
        cfg = load_config(args.config, **overrides)
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return 2
    if args.command == "run-sim":
        return cmd_run_sim(cfg)
    if args.command == "replay":
        return cmd_replay(args.log, cfg)
    return cmd_bench(cfg)


if __name__ == "__main__":
    sys.exit(main())
