"""Reevaluation-based corrected archives and stochasticity losses.

Every occupant of a final archive is reevaluated ``N`` times with fresh
seeds; the averaged fitness and descriptor are reinserted into an empty
archive with the same container. Reevaluations never touch the run's
evaluation counter.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .archive import Archive
from .core import ConfigError, FitnessBounds, Individual, clamp_descriptor, derive_seeds
from .metrics import ArchiveProfile, archive_profile, coverage, max_fitness, qd_score
from .tasks import TaskSpec, evaluate_batch

CORRECTED_HEADER = (
    "checkpoint_evaluations", "corrected_coverage", "corrected_qd_score", "corrected_max_fitness",
    "loss_coverage", "loss_qd_score", "loss_max_fitness",
)

# individuals reevaluated per kernel call
_CHUNK = 256


@dataclass(frozen=True)
class CorrectedConfig:
    num_reevals: int = 50
    reeval_seed: int = 0

    def __post_init__(self):
        if self.num_reevals < 1:
            raise ConfigError("num_reevals must be >= 1")


def _reeval_seeds(cfg: CorrectedConfig, cell: int) -> np.ndarray:
    return derive_seeds(cfg.reeval_seed, cell, index=np.arange(cfg.num_reevals))


def _shifted_mean(x: np.ndarray) -> np.ndarray:
    # anchored on the first sample: N identical samples average to exactly that sample
    return x[0] + np.sum(x - x[0], axis=0) / len(x)


def expected_eval(ind: Individual, task: TaskSpec, cfg: CorrectedConfig, cell: int = 0,
                  workers: int = 1) -> tuple[float, np.ndarray]:
    """Mean fitness and mean descriptor over ``cfg.num_reevals`` fresh evaluations.

    The descriptor is clamped after averaging.
    """
    seeds = _reeval_seeds(cfg, cell)
    g = np.repeat(ind.genotype[None, :], len(seeds), axis=0)
    fit, desc = evaluate_batch(g, task, seeds, workers=workers)
    return float(_shifted_mean(fit)), clamp_descriptor(_shifted_mean(desc), task.bd_bounds)


def build_corrected_archive(a: Archive, task: TaskSpec, cfg: CorrectedConfig, workers: int = 1) -> Archive:
    """Reinsert every occupant with its expected fitness/descriptor, in ascending cell order."""
    if len(a) == 0:
        raise ValueError("cannot correct an empty archive")
    out = a.empty_like()
    items = a.items()
    N = cfg.num_reevals
    for start in range(0, len(items), _CHUNK):
        chunk = items[start:start + _CHUNK]
        seeds = np.concatenate([_reeval_seeds(cfg, cell) for cell, _ in chunk])
        g = np.repeat(np.stack([ind.genotype for _, ind in chunk]), N, axis=0)
        fit, desc = evaluate_batch(g, task, seeds, workers=workers)
        fit = fit.reshape(len(chunk), N)
        desc = desc.reshape(len(chunk), N, task.bd_dim)
        for j, (_, ind) in enumerate(chunk):
            f_bar = float(_shifted_mean(fit[j]))
            bd_bar = clamp_descriptor(_shifted_mean(desc[j]), task.bd_bounds)
            out.try_insert(Individual(ind.genotype, f_bar, bd_bar, int(seeds[j * N])))
    return out


def _ratio(before: float, after: float) -> float | None:
    return None if before == 0 else (before - after) / before


def losses(a: Archive, corrected: Archive, b: FitnessBounds):
    """``(loss_coverage, loss_qd_score, loss_max_fitness)``; ``None`` where undefined.

    The max-fitness loss is undefined when the original max fitness is not
    strictly positive, unless nothing was lost (then it is exactly 0).
    """
    cov = _ratio(coverage(a), coverage(corrected))
    qd = _ratio(qd_score(a, b), qd_score(corrected, b))
    mf = None
    if len(a) and len(corrected):
        m, mc = max_fitness(a), max_fitness(corrected)
        if m > 0:
            mf = (m - mc) / m
        elif mc == m:
            mf = 0.0
    return cov, qd, mf


@dataclass
class CorrectedReport:
    checkpoint_evaluations: int
    coverage: int
    qd_score: float
    max_fitness: float
    corrected_coverage: int
    corrected_qd_score: float
    corrected_max_fitness: float
    loss_coverage: float | None
    loss_qd_score: float | None
    loss_max_fitness: float | None
    max_fitness_drop: float
    num_reevals: int
    corrected_archive: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "CorrectedReport":
        return cls(**json.loads(Path(path).read_text()))

    def csv_row(self) -> list:
        def fmt(v):
            if v is None or (isinstance(v, float) and math.isnan(v)):
                return ""
            return repr(v) if isinstance(v, float) else v

        return [fmt(getattr(self, k)) for k in CORRECTED_HEADER]


def corrected_report(a: Archive, task: TaskSpec, cfg: CorrectedConfig, evaluations: int = 0,
                     workers: int = 1) -> tuple[CorrectedReport, Archive, ArchiveProfile]:
    b = task.fitness_bounds
    corr = build_corrected_archive(a, task, cfg, workers=workers)
    lc, lq, lm = losses(a, corr, b)
    report = CorrectedReport(
        checkpoint_evaluations=int(evaluations),
        coverage=coverage(a),
        qd_score=qd_score(a, b),
        max_fitness=max_fitness(a),
        corrected_coverage=coverage(corr),
        corrected_qd_score=qd_score(corr, b),
        corrected_max_fitness=max_fitness(corr),
        loss_coverage=lc,
        loss_qd_score=lq,
        loss_max_fitness=lm,
        max_fitness_drop=max_fitness(a) - max_fitness(corr),
        num_reevals=cfg.num_reevals,
    )
    return report, corr, archive_profile(corr)


def write_corrected_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CORRECTED_HEADER)
        for r in reports:
            w.writerow(r.csv_row())
