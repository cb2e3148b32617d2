"""Command-line entry point: ``tactile-esc {sweep,random,trial,replay-frames}``."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .bench import (AXES, CampaignReport, TrialSpec, _offset_pose, report, run_random_campaign,
                    run_single_axis_sweep, run_trial, write_trace_csv)
from .config import ConfigError, RunConfig, load_config
from .esc import Pose6
from .lock_sim import ARCHETYPES
from .tracker import TrackingLost, load_frame_directory, replay, write_strain_csv


def _common(p: argparse.ArgumentParser, locks_many: bool = True):
    if locks_many:
        p.add_argument("--lock", choices=ARCHETYPES, action="append",
                       help="lock archetype (repeatable; default: all four)")
    else:
        p.add_argument("--lock", choices=ARCHETYPES, default="DiscDetainer")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--feedback-rate", type=float, default=None, help="Hz, within [10, 16]")
    p.add_argument("--strain-source", choices=("direct-plant", "rendered-frames"),
                   default="direct-plant")
    p.add_argument("--time-limit", type=float, default=None, help="simulated seconds")
    p.add_argument("--out", type=Path, default=Path("out"), help="output directory")
    p.add_argument("--config", type=Path, default=None, help="YAML config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tactile-esc",
                                     description="ESC key-insertion bench on simulated locks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="single-axis perturbation sweep")
    _common(p)
    p.add_argument("--axis", choices=tuple(AXES), action="append",
                   help="perturbed axis (repeatable; default: all five)")
    p.add_argument("--offsets", type=str, default=None,
                   help="comma-separated offsets in mm or deg (default: axis grid)")
    p.add_argument("--trials-per-cell", type=int, default=3)
    p.add_argument("--traces", action="store_true", help="also write per-trial trace CSVs")

    p = sub.add_parser("random", help="random initial-pose campaign")
    _common(p)
    p.add_argument("--n-trials", type=int, default=30, help="trials per lock")
    p.add_argument("--traces", action="store_true", help="also write per-trial trace CSVs")

    p = sub.add_parser("trial", help="one trial from an explicit initial offset")
    _common(p, locks_many=False)
    p.add_argument("--offsets", type=str, default="0,0,0,0,0",
                   help="x_mm,z_mm,alpha_deg,beta_deg,gamma_deg offset from aligned")

    p = sub.add_parser("replay-frames", help="track a directory of PGM frames")
    p.add_argument("frames", type=Path, help="directory of numbered 8-bit PGM frames")
    p.add_argument("--out", type=Path, default=Path("out"))
    return parser


def _floats(text: str, name: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--{name}: {exc}") from exc


def _spec_kwargs(args, cfg: RunConfig) -> dict:
    return {
        "feedback_rate": args.feedback_rate if args.feedback_rate is not None else cfg.feedback_rate,
        "time_limit": args.time_limit if args.time_limit is not None else cfg.time_limit,
        "strain_source": args.strain_source,
        "esc_config": cfg.esc,
    }


def _print_summary(campaign: CampaignReport, paths: dict):
    summary = campaign.summary()
    for lock, s in summary["locks"].items():
        time = "-" if s["mean_time"] is None else f"{s['mean_time']} s"
        print(f"{lock:13s} {s['successes']:3d}/{s['trials']:<3d} {s['rate']:3d}%  mean {time}")
    print(f"cells: {paths['cells']}")
    print(f"summary: {paths['summary']}")


def cmd_sweep(args, cfg):
    kwargs = _spec_kwargs(args, cfg)
    if args.trials_per_cell < 0:
        raise ConfigError("--trials-per-cell must be >= 0")
    offsets = _floats(args.offsets, "offsets") if args.offsets else None
    campaign = CampaignReport("sweep")
    for lock in args.lock or ARCHETYPES:
        for axis in args.axis or tuple(AXES):
            run_single_axis_sweep(cfg.lock(lock), axis, offsets, args.trials_per_cell,
                                  seed=args.seed, report=campaign, **kwargs)
    _print_summary(campaign, report(campaign, args.out, traces=args.traces))


def cmd_random(args, cfg):
    kwargs = _spec_kwargs(args, cfg)
    if args.n_trials < 0:
        raise ConfigError("--n-trials must be >= 0")
    campaign = CampaignReport("random")
    for lock in args.lock or ARCHETYPES:
        run_random_campaign(cfg.lock(lock), args.n_trials, seed=args.seed, report=campaign,
                            **kwargs)
    _print_summary(campaign, report(campaign, args.out, traces=args.traces))


def cmd_trial(args, cfg):
    values = _floats(args.offsets, "offsets")
    if len(values) != 5:
        raise ConfigError("--offsets needs 5 values: x_mm,z_mm,alpha_deg,beta_deg,gamma_deg")
    offset = Pose6()
    for axis, v in zip(AXES, values):
        offset = offset + _offset_pose(axis, v)
    spec = TrialSpec(cfg.lock(args.lock), offset, rng_seed=args.seed, **_spec_kwargs(args, cfg))
    record = run_trial(spec)
    args.out.mkdir(parents=True, exist_ok=True)
    trace = write_trace_csv(record, args.out / "trial_trace.csv")
    summary = {
        "lock": args.lock,
        "success": record.success,
        "insertion_time": None if record.insertion_time is None else int(round(record.insertion_time)),
        "failure_class": record.failure_class,
        "ticks": len(record.trace),
    }
    (args.out / "trial_summary.json").write_text(json.dumps(summary, indent=2))
    print(json.dumps(summary))
    print(f"trace: {trace}")


def cmd_replay(args, _cfg):
    frames = load_frame_directory(args.frames)
    raw, reported = replay(frames, with_raw=True)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / "strain.csv"
    write_strain_csv(path, raw, reported)
    print(f"{len(frames)} frames, max strain {max(reported, default=0.0):.3f} px")
    print(f"strain: {path}")


COMMANDS = {"sweep": cmd_sweep, "random": cmd_random, "trial": cmd_trial,
            "replay-frames": cmd_replay}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
        COMMANDS[args.command](args, cfg)
    except TrackingLost as exc:
        print(f"error: tracking lost at frame {exc.frame_index}: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
