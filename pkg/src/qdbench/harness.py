"""Experiment orchestration: configuration, replications, outputs, aggregation.

Output layout::

    <output_dir>/manifest.json
    <output_dir>/<algorithm>/<task>/rep_<r>/
        metrics.csv  archive.json  profile.csv  profile_exact.csv
        corrected_report.json  corrected_archive.json  corrected_metrics.csv
        corrected_profile.csv  DONE
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import platform
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__, backend
from .algorithms import ALGORITHMS, CVT_MAP_ELITES, AlgoConfig, run
from .archive import Archive, CvtSpec, GridSpec
from .core import ConfigError, derive_seed
from .corrected import CorrectedConfig, corrected_report, write_corrected_csv
from .metrics import archive_profile, write_metrics_csv, write_profile_csv
from .tasks import PRESETS, TaskSpec, default_subdivisions, make_task

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger(__name__)

DONE = "DONE"
REP_FILES = (
    "metrics.csv", "archive.json", "profile.csv", "profile_exact.csv",
    "corrected_report.json", "corrected_archive.json", "corrected_metrics.csv", "corrected_profile.csv",
)
SUMMARY_METRICS = ("wall_time_s", "coverage", "qd_score", "max_fitness")
CORRECTED_SUMMARY_METRICS = (
    "corrected_coverage", "corrected_qd_score", "corrected_max_fitness",
    "loss_coverage", "loss_qd_score", "loss_max_fitness",
)

DEFAULTS: dict[str, Any] = {
    "experiment": {"global_seed": 0, "replications": 10, "output_dir": "runs/experiment", "workers": 1},
    "task": {"preset": "pointmass-omni"},
    "algorithm": {
        "names": list(ALGORITHMS),
        "batch_size": 256,
        "init_batches": 4,
        "eval_budget": 50_000,
        "init_range": [-1.0, 1.0],
    },
    "archive": {"grid": {}, "cvt": {}},
    "corrected": {"enabled": True, "num_reevals": 50, "every_batches": 0},
    "plots": {"low_color": "#fff5eb", "high_color": "#7f2704"},
}

_KNOWN = {
    "experiment": {"global_seed", "replications", "output_dir", "workers"},
    "algorithm": {"names", "batch_size", "init_batches", "eval_budget", "init_range", "mutation_sigma"},
    "corrected": {"enabled", "num_reevals", "every_batches"},
    "plots": {"low_color", "high_color"},
    "archive.grid": {"subdivisions"},
    "archive.cvt": {"num_centroids", "kmeans_samples", "kmeans_max_iters", "kmeans_tolerance", "centroid_seed"},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def load_config(path) -> dict:
    """Read a TOML config, or a JSON manifest written by a previous run."""
    path = Path(path)
    if path.suffix == ".json":
        data = json.loads(path.read_text())
        return data.get("config", data)
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def apply_overrides(raw: dict, *, seed=None, algos=None, task=None, budget=None,
                    replications=None, out=None, reevals=None, workers=None) -> dict:
    raw = copy.deepcopy(raw)
    sec = lambda name: raw.setdefault(name, {})  # noqa: E731
    if seed is not None:
        sec("experiment")["global_seed"] = int(seed)
    if replications is not None:
        sec("experiment")["replications"] = int(replications)
    if out is not None:
        sec("experiment")["output_dir"] = str(out)
    if workers is not None:
        sec("experiment")["workers"] = int(workers)
    if algos:
        sec("algorithm")["names"] = list(algos)
    if budget is not None:
        sec("algorithm")["eval_budget"] = int(budget)
    if task is not None and task != sec("task").get("preset"):
        raw["task"] = {"preset": task}
    if reevals is not None:
        sec("corrected")["num_reevals"] = int(reevals)
    return raw


@dataclass
class ExperimentConfig:
    task: TaskSpec
    grid: GridSpec
    cvt: CvtSpec
    algorithms: list[str]
    algo_params: dict
    corrected: CorrectedConfig
    corrected_enabled: bool
    corrected_every: int
    replications: int
    output_dir: Path
    global_seed: int
    workers: int
    plots: dict = field(default_factory=dict)
    resolved: dict = field(default_factory=dict)

    def algo_config(self, name: str, rep: int) -> AlgoConfig:
        return AlgoConfig(algorithm=name, seed=self.rep_seed(rep), workers=self.workers, **self.algo_params)

    def rep_seed(self, rep: int) -> int:
        return derive_seed(self.global_seed, rep)

    def archive_spec(self, name: str):
        return self.cvt if name == CVT_MAP_ELITES else self.grid


def resolve_config(raw: dict) -> ExperimentConfig:
    """Fill defaults, validate everything, and build an :class:`ExperimentConfig`.

    Raises :class:`ConfigError` before any evaluation happens.
    """
    cfg = _merge(DEFAULTS, raw)
    for section, keys in _KNOWN.items():
        node = cfg
        for part in section.split("."):
            node = node.get(part, {})
        unknown = set(node) - keys
        if unknown:
            raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")

    task_cfg = dict(cfg["task"])
    preset = task_cfg.pop("preset")
    if preset not in PRESETS:
        raise ConfigError(f"unknown task preset {preset!r}; choose from {sorted(PRESETS)}")
    try:
        task = make_task(preset, **task_cfg)
    except TypeError as exc:
        raise ConfigError(f"bad task override: {exc}") from None
    cfg["task"] = {"preset": preset, **task_cfg}

    grid_cfg = cfg["archive"]["grid"]
    grid_cfg.setdefault("subdivisions", list(default_subdivisions(task)))
    grid = GridSpec(task.bd_bounds, tuple(grid_cfg["subdivisions"]))
    cvt_cfg = cfg["archive"]["cvt"]
    cvt_cfg.setdefault("num_centroids", grid.capacity)
    cvt_cfg.setdefault("kmeans_samples", 50 * int(cvt_cfg["num_centroids"]))
    cvt_cfg.setdefault("kmeans_max_iters", 100)
    cvt_cfg.setdefault("kmeans_tolerance", 1e-9)
    cvt_cfg.setdefault("centroid_seed", 0)
    cvt = CvtSpec(task.bd_bounds, **cvt_cfg)

    a = cfg["algorithm"]
    names = a["names"] if isinstance(a["names"], list) else [a["names"]]
    for n in names:
        if n not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {n!r}; choose from {ALGORITHMS}")
    if len(set(names)) != len(names):
        raise ConfigError("duplicate algorithm names")
    algo_params = {k: v for k, v in a.items() if k != "names"}
    algo_params["init_range"] = tuple(algo_params["init_range"])
    probe = AlgoConfig(algorithm=names[0], **algo_params)  # validates budget / sigma
    cfg["algorithm"]["mutation_sigma"] = probe.mutation_sigma
    algo_params["mutation_sigma"] = probe.mutation_sigma

    c = cfg["corrected"]
    corrected = CorrectedConfig(int(c["num_reevals"]))
    if int(c["every_batches"]) < 0:
        raise ConfigError("corrected.every_batches must be >= 0")

    for key in ("low_color", "high_color"):
        if not re.match(r"^#[0-9a-fA-F]{6}$", str(cfg["plots"][key])):
            raise ConfigError(f"plots.{key} must look like #rrggbb, got {cfg['plots'][key]!r}")

    e = cfg["experiment"]
    if int(e["replications"]) < 1:
        raise ConfigError("replications must be >= 1")
    if int(e["workers"]) < 1:
        raise ConfigError("workers must be >= 1")
    return ExperimentConfig(
        task=task, grid=grid, cvt=cvt, algorithms=list(names), algo_params=algo_params,
        corrected=corrected, corrected_enabled=bool(c["enabled"]), corrected_every=int(c["every_batches"]),
        replications=int(e["replications"]), output_dir=Path(e["output_dir"]),
        global_seed=int(e["global_seed"]), workers=int(e["workers"]), plots=dict(cfg["plots"]),
        resolved=cfg,
    )


def rep_dir(output_dir, algorithm: str, task: str, rep: int) -> Path:
    return Path(output_dir) / algorithm / task / f"rep_{rep}"


def write_manifest(cfg: ExperimentConfig) -> Path:
    manifest = {
        "qdbench_version": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "platform": platform.platform(),
        "backend": backend.BACKEND,
        "config": cfg.resolved,
    }
    path = cfg.output_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def run_replication(cfg: ExperimentConfig, algorithm: str, rep: int) -> Path:
    out = rep_dir(cfg.output_dir, algorithm, cfg.task.name, rep)
    out.mkdir(parents=True, exist_ok=True)
    (out / DONE).unlink(missing_ok=True)
    algo = cfg.algo_config(algorithm, rep)
    task = cfg.task
    corrected_cfg = CorrectedConfig(cfg.corrected.num_reevals, derive_seed(algo.seed, 3))
    reports = []
    final = {}

    def checkpoint(archive: Archive, evals: int):
        if not cfg.corrected_enabled:
            return
        report, corr, profile = corrected_report(archive, task, corrected_cfg, evals, workers=cfg.workers)
        reports.append(report)
        final.update(report=report, archive=corr, profile=profile)

    result = run(algo, task, cfg.archive_spec(algorithm),
                 checkpoint_every=cfg.corrected_every, on_checkpoint=checkpoint)
    b = task.fitness_bounds
    write_metrics_csv(result.log, out / "metrics.csv")
    result.archive.dump(out / "archive.json")
    profile = archive_profile(result.archive)
    write_profile_csv(profile, b, out / "profile.csv")
    write_profile_csv(profile, b, out / "profile_exact.csv", exact=True)
    if cfg.corrected_enabled:
        final["archive"].dump(out / "corrected_archive.json")
        final["report"].corrected_archive = "corrected_archive.json"
        final["report"].dump(out / "corrected_report.json")
        write_corrected_csv(reports, out / "corrected_metrics.csv")
        write_profile_csv(final["profile"], b, out / "corrected_profile.csv")
    (out / DONE).write_text(f"{result.evaluations}\n")
    return out


def run_experiment(cfg: ExperimentConfig) -> Path:
    """Run every algorithm for every replication; returns the output directory."""
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(cfg)
    for algorithm in cfg.algorithms:
        for rep in range(cfg.replications):
            path = run_replication(cfg, algorithm, rep)
            logger.info("finished %s", path)
    return cfg.output_dir


# ---------------------------------------------------------------- aggregation


def complete_reps(output_dir) -> tuple[dict[tuple[str, str], list[Path]], list[Path]]:
    """Map (algorithm, task) -> completed replication dirs, plus the incomplete ones."""
    groups: dict[tuple[str, str], list[Path]] = {}
    incomplete = []
    for rep in sorted(Path(output_dir).glob("*/*/rep_*"), key=lambda p: (p.parent, int(p.name[4:]))):
        if not rep.is_dir():
            continue
        if not (rep / DONE).exists():
            incomplete.append(rep)
            continue
        groups.setdefault((rep.parent.parent.name, rep.parent.name), []).append(rep)
    return groups, incomplete


def _read_rows(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _float(v: str) -> float:
    return float(v) if v != "" else float("nan")


def _summarise(groups, filename, key, metrics) -> list[dict]:
    rows = []
    for (algorithm, task), reps in sorted(groups.items()):
        table: dict[int, list[dict]] = {}
        for rep in reps:
            path = rep / filename
            if not path.exists():
                continue
            for row in _read_rows(path):
                table.setdefault(int(row[key]), []).append(row)
        for checkpoint in sorted(table):
            entries = table[checkpoint]
            out = {"algorithm": algorithm, "task": task, key: checkpoint, "replications": len(entries)}
            for m in metrics:
                vals = np.array([_float(e[m]) for e in entries])
                vals = vals[~np.isnan(vals)]
                if len(vals):
                    q1, med, q3 = np.percentile(vals, [25, 50, 75])
                else:
                    q1 = med = q3 = float("nan")
                out[f"{m}_median"] = float(med)
                out[f"{m}_q1"] = float(q1)
                out[f"{m}_q3"] = float(q3)
                out[f"{m}_iqr"] = float(q3 - q1)
            rows.append(out)
    return rows


def _write_rows(rows: list[dict], header: list[str], path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})


def _header(key, metrics):
    cols = ["algorithm", "task", key, "replications"]
    for m in metrics:
        cols += [f"{m}_median", f"{m}_q1", f"{m}_q3", f"{m}_iqr"]
    return cols


def aggregate(output_dir) -> dict[str, list[dict]]:
    """Median and quartiles of every metric per (algorithm, checkpoint).

    Writes ``summary.csv`` and ``corrected_summary.csv`` into ``output_dir``.
    Replications without a DONE marker are skipped with a warning.
    """
    output_dir = Path(output_dir)
    out = summarise(output_dir)
    _write_rows(out["summary"], _header("evaluations", SUMMARY_METRICS), output_dir / "summary.csv")
    _write_rows(out["corrected"], _header("checkpoint_evaluations", CORRECTED_SUMMARY_METRICS),
                output_dir / "corrected_summary.csv")
    return out


def summarise(output_dir) -> dict[str, list]:
    """Same tables as :func:`aggregate`, computed in memory without writing anything."""
    output_dir = Path(output_dir)
    groups, incomplete = complete_reps(output_dir)
    if incomplete:
        logger.warning("skipping incomplete replications: %s", ", ".join(map(str, incomplete)))
    if not groups:
        raise FileNotFoundError(f"no completed replications under {output_dir}")
    summary = _summarise(groups, "metrics.csv", "evaluations", SUMMARY_METRICS)
    corrected = _summarise(groups, "corrected_metrics.csv", "checkpoint_evaluations", CORRECTED_SUMMARY_METRICS)
    return {"summary": summary, "corrected": corrected, "incomplete": incomplete}


def read_summary(path) -> list[dict]:
    rows = _read_rows(Path(path))
    for r in rows:
        for k, v in r.items():
            if k not in ("algorithm", "task"):
                r[k] = _float(v)
    return rows

