"""Command-line entry points: serve, replay, synth, eval, metrics."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="teletwin",
                                     description="Digital-twin teleoperation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve", help="run the teleoperation server")
    p.add_argument("--scene", default="configs/scene_tube.toml")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int,
                   default=int(os.environ.get("TELETWIN_PORT", "8765")))
    p.add_argument("--scale", type=int, default=1, choices=[1, 2, 3, 4, 5])
    p.add_argument("--alpha", type=float, default=0.2)
    p.add_argument("--mode", choices=["bbox", "mask"], default="mask")
    p.add_argument("--parts", choices=["full", "halves"], default="full")
    p.add_argument("--log", default=None, help="session log path")
    p.add_argument("--robot", default=None, help="robot DH config file")
    p.add_argument("--static", default=None, help="serve console assets from this dir")
    p.add_argument("--duration", type=float, default=None,
                   help="stop after N seconds (default: run until disconnect)")

    p = sub.add_parser("replay", help="re-emit a recorded session")
    p.add_argument("--log", required=True)
    p.add_argument("--speed", type=float, default=1.0)

    p = sub.add_parser("synth", help="generate the synthetic dataset")
    p.add_argument("--n", type=int, default=80, help="number of images")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split", type=float, default=0.75, help="train fraction")
    p.add_argument("--backgrounds", default=None)
    p.add_argument("--cutouts", default=None)
    p.add_argument("--out", default="dataset")

    p = sub.add_parser("eval", help="score predictions against COCO ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--csv", action="store_true")

    p = sub.add_parser("metrics", help="session metrics from log files")
    p.add_argument("logs", nargs="+")
    p.add_argument("--csv", action="store_true")

    args = parser.parse_args(argv)
    return _dispatch(args)


def _dispatch(args) -> int:
    if args.command == "serve":
        from .server import SessionConfig, run_session
        log = args.log
        if log is None and "TELETWIN_LOG_DIR" in os.environ:
            log = str(Path(os.environ["TELETWIN_LOG_DIR"]) / "session.log")
        cfg = SessionConfig(scene_path=args.scene, host=args.host, port=args.port,
                            scale=args.scale, alpha=args.alpha,
                            estimation_mode=args.mode, parts_mode=args.parts,
                            log_path=log, robot_config=args.robot,
                            static_dir=args.static, duration=args.duration)
        print(f"serving scene {args.scene} on {args.host}:{args.port}")
        return run_session(cfg)

    if args.command == "replay":
        from .server import CorruptLog, replay
        try:
            for msg in replay(args.log, speed=args.speed):
                print(json.dumps(msg, separators=(",", ":"), sort_keys=True))
        except CorruptLog as e:
            print(f"corrupt log: {e}", file=sys.stderr)
            return 4
        return 0

    if args.command == "synth":
        from .dataset import MissingAssets, SynthConfig, generate
        cfg = SynthConfig(n_images=args.n, split=args.split, seed=args.seed,
                          backgrounds_dir=args.backgrounds, cutouts_dir=args.cutouts,
                          out_dir=args.out)
        try:
            train, test = generate(cfg)
        except MissingAssets as e:
            print(f"missing assets: {e}", file=sys.stderr)
            return 5
        print(f"wrote {len(train['images'])} train / {len(test['images'])} test "
              f"images with {len(train['annotations']) + len(test['annotations'])} "
              f"annotations to {args.out}")
        return 0

    if args.command == "eval":
        from .evaluation import evaluate_files, format_report
        report = evaluate_files(args.gt, args.pred)
        print(format_report(report, csv=args.csv))
        return 0

    if args.command == "metrics":
        from .metrics import (MetricsError, aggregate_reports, format_aggregate,
                              format_increment_table, parse_session_log,
                              session_report)
        reports = []
        for p in args.logs:
            try:
                reports.append(session_report(parse_session_log(p)))
            except MetricsError as e:
                print(f"{p}: {e}", file=sys.stderr)
        if not reports:
            print("no scorable sessions", file=sys.stderr)
            return 6
        stats = aggregate_reports(reports)
        print(format_aggregate(stats, csv=args.csv))
        incs = [r.increment_pct for r in reports if r.increment_pct is not None]
        if incs and not args.csv:
            mean_len = sum(r.trajectory_length_m for r in reports) / len(reports)
            print()
            print(format_increment_table(
                [("Recorded sessions", mean_len, sum(incs) / len(incs))]))
        return 0

    return 1


if __name__ == "__main__":
    sys.exit(main())
