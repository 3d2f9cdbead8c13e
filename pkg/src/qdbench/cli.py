"""Command-line entry point: ``qdbench {run,validate,correct,profile,aggregate,plot}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import harness, plots
from .algorithms import ALGORITHMS
from .archive import Archive
from .core import ConfigError
from .corrected import CorrectedConfig, corrected_report, write_corrected_csv
from .metrics import archive_profile, read_metrics_csv, write_profile_csv
from .tasks import PRESETS, TaskSpec, make_task

log = logging.getLogger("qdbench")


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _experiment_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="TOML config or a manifest.json from a previous run")
    p.add_argument("--seed", type=_u64, help="global seed")
    p.add_argument("--algo", action="append", choices=ALGORITHMS, help="algorithm (repeatable)")
    p.add_argument("--task", choices=sorted(PRESETS), help="task preset")
    p.add_argument("--budget", type=_positive, help="evaluations per run")
    p.add_argument("--replications", type=_positive)
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--reevals", type=_positive, help="reevaluations per individual for corrected metrics")
    p.add_argument("--workers", type=_positive, help="evaluation threads")


def _resolve(args) -> harness.ExperimentConfig:
    raw = harness.load_config(args.config) if args.config else {}
    raw = harness.apply_overrides(raw, seed=args.seed, algos=args.algo, task=args.task, budget=args.budget,
                                  replications=args.replications, out=args.out, reevals=args.reevals,
                                  workers=args.workers)
    return harness.resolve_config(raw)


def cmd_validate(args) -> int:
    cfg = _resolve(args)
    print(json.dumps(cfg.resolved, indent=2, sort_keys=True))
    return 0


def cmd_run(args) -> int:
    cfg = _resolve(args)
    out = harness.run_experiment(cfg)
    harness.aggregate(out)
    if args.plots:
        plots.plot_experiment(out, cfg.plots["low_color"], cfg.plots["high_color"])
    print(out)
    return 0


def _task_for(archive: Archive, preset: str | None) -> TaskSpec:
    if preset is not None:
        return make_task(preset)
    if not archive.task:
        raise ConfigError("archive dump stores no task; pass --task")
    return TaskSpec.from_dict(archive.task)


def cmd_correct(args) -> int:
    archive = Archive.load(args.input)
    task = _task_for(archive, args.task)
    evaluations = 0
    metrics = args.input.parent / "metrics.csv"
    if metrics.exists():
        records = read_metrics_csv(metrics)
        evaluations = records[-1].evaluations if records else 0
    cfg = CorrectedConfig(args.reevals, args.seed)
    report, corr, profile = corrected_report(archive, task, cfg, evaluations, workers=args.workers)
    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    corr.dump(out / "corrected_archive.json")
    report.corrected_archive = "corrected_archive.json"
    report.dump(out / "corrected_report.json")
    write_corrected_csv([report], out / "corrected_metrics.csv")
    write_profile_csv(profile, task.fitness_bounds, out / "corrected_profile.csv")
    print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    return 0


def cmd_profile(args) -> int:
    archive = Archive.load(args.input)
    task = _task_for(archive, args.task)
    write_profile_csv(archive_profile(archive), task.fitness_bounds, args.out, exact=args.exact)
    return 0


def cmd_aggregate(args) -> int:
    out = harness.aggregate(args.input)
    for path in out["incomplete"]:
        print(f"warning: skipped incomplete replication {path}", file=sys.stderr)
    print(args.input / "summary.csv")
    return 0


def cmd_plot(args) -> int:
    src = args.input
    if args.kind == "curves":
        if not args.metric:
            raise ConfigError(f"--metric is required for curves; valid metrics: {', '.join(plots.CURVE_METRICS)}")
        plots.plot_metric_curves(src, args.metric, args.x, out=args.out, task=args.task)
    elif args.kind == "profile":
        files = sorted(src.glob("**/profile.csv")) if src.is_dir() else [src]
        if not files:
            raise FileNotFoundError(f"no profile.csv under {src}")
        labels = [str(f.parent.relative_to(src)) if src.is_dir() else f.stem for f in files]
        plots.plot_archive_profile(files, out=args.out, labels=labels)
    else:
        dump = src / "archive.json" if src.is_dir() else src
        plots.plot_archive_heatmap(dump, out=args.out, low_color=args.low_color, high_color=args.high_color)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qdbench", description="Quality-diversity benchmarking harness")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an experiment")
    _experiment_args(p)
    p.add_argument("--plots", action="store_true", help="also render every figure into <out>/plots")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("validate", help="check a config and print it fully resolved")
    _experiment_args(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("correct", help="corrected report for an archive dump")
    p.add_argument("--in", dest="input", type=Path, required=True, help="archive.json")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--reevals", type=_positive, default=50)
    p.add_argument("--seed", type=_u64, default=0)
    p.add_argument("--task", choices=sorted(PRESETS), help="override the task stored in the dump")
    p.add_argument("--workers", type=_positive, default=1)
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("profile", help="archive profile CSV from a dump")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--exact", action="store_true", help="one row per distinct fitness")
    p.add_argument("--task", choices=sorted(PRESETS))
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("aggregate", help="median / IQR tables for an experiment tree")
    p.add_argument("--in", dest="input", type=Path, required=True)
    p.set_defaults(func=cmd_aggregate)

    p = sub.add_parser("plot", help="render an SVG figure")
    p.add_argument("--kind", choices=("curves", "profile", "heatmap"), required=True)
    p.add_argument("--metric")
    p.add_argument("--x", choices=plots.X_AXES, default="evaluations")
    p.add_argument("--in", dest="input", type=Path, required=True, help="experiment dir or file")
    p.add_argument("--out", type=Path, required=True, help="output .svg")
    p.add_argument("--task", help="restrict curves to one task")
    p.add_argument("--low-color", default=plots.LOW_COLOR)
    p.add_argument("--high-color", default=plots.HIGH_COLOR)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"qdbench {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
