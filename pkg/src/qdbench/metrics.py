"""Coverage, QD Score, Max Fitness and the Archive Profile.

QD Score normalises with the task's fixed :class:`FitnessBounds`, under which
the area under the Archive Profile equals ``(f_max - f_min) * qd_score``.
"""

from __future__ import annotations

import csv
import time
from dataclasses import astuple, dataclass, fields

import numpy as np

from .archive import Archive
from .core import FitnessBounds

METRICS_HEADER = ("evaluations", "wall_time_s", "coverage", "qd_score", "max_fitness")
PROFILE_HEADER = ("fitness_threshold", "count")
PROFILE_RESOLUTION = 512


class EmptyArchiveError(ValueError):
    pass


def _values(a) -> np.ndarray:
    if isinstance(a, Archive):
        return a.fitnesses()
    return np.asarray(a, dtype=np.float64).reshape(-1)


def coverage(a) -> int:
    return int(len(_values(a)))


def qd_score(a, b: FitnessBounds, relative: bool = False) -> float:
    """Sum of normalised fitnesses.

    ``a`` is an archive or a plain array of fitness values. With
    ``relative=True`` the archive's own min/max replace the fixed bounds;
    a single-valued archive then scores 0.
    """
    f = _values(a)
    if len(f) == 0:
        return 0.0
    if relative:
        lo, hi = float(f.min()), float(f.max())
        return float(np.sum((f - lo) / (hi - lo))) if hi > lo else 0.0
    bad = (f < b.f_min) | (f > b.f_max)
    if np.any(bad):
        raise ValueError(
            f"fitness {f[bad][0]!r} outside bounds [{b.f_min}, {b.f_max}]; configured bounds too tight"
        )
    return float(np.sum(f - b.f_min) / b.width)


def max_fitness(a) -> float:
    f = _values(a)
    if len(f) == 0:
        raise EmptyArchiveError("max fitness of an empty archive is undefined")
    return float(f.max())


@dataclass(frozen=True)
class ArchiveProfile:
    distinct_fitnesses: np.ndarray
    counts_at: np.ndarray
    counts_above: np.ndarray

    @property
    def coverage(self) -> int:
        return int(self.counts_at.sum())

    def __call__(self, threshold):
        """Number of individuals with fitness >= threshold (vectorised)."""
        idx = np.searchsorted(self.distinct_fitnesses, threshold, side="left")
        padded = np.append(self.counts_above, 0)
        out = padded[idx]
        return int(out) if np.ndim(out) == 0 else out

    def resample(self, b: FitnessBounds, n: int = PROFILE_RESOLUTION):
        thresholds = np.linspace(b.f_min, b.f_max, n)
        return thresholds, self(thresholds)

    def __eq__(self, other):
        if not isinstance(other, ArchiveProfile):
            return NotImplemented
        return (
            np.array_equal(self.distinct_fitnesses, other.distinct_fitnesses)
            and np.array_equal(self.counts_at, other.counts_at)
        )

    __hash__ = None


def archive_profile(a) -> ArchiveProfile:
    values, counts = np.unique(_values(a), return_counts=True)
    above = np.cumsum(counts[::-1])[::-1]
    return ArchiveProfile(values, counts.astype(np.int64), above.astype(np.int64))


def area_under_profile(p: ArchiveProfile, b: FitnessBounds) -> float:
    """Area under the profile step curve, measured from ``b.f_min``."""
    f = p.distinct_fitnesses
    if len(f) == 0:
        return 0.0
    if f[0] < b.f_min or f[-1] > b.f_max:
        raise ValueError(f"profile fitnesses outside bounds [{b.f_min}, {b.f_max}]")
    # on (f_i, f_{i+1}] the profile equals counts_above[i + 1]
    steps = np.diff(f) * p.counts_above[1:]
    return float(p.coverage * (f[0] - b.f_min) + np.sum(steps))


@dataclass(frozen=True)
class MetricsRecord:
    evaluations: int
    wall_time_s: float
    coverage: int
    qd_score: float
    max_fitness: float


class Clock:
    """Monotonic seconds since construction."""

    def __init__(self):
        self._start = time.monotonic()

    def __call__(self) -> float:
        return time.monotonic() - self._start


def record_metrics(a: Archive, evals: int, clock, b: FitnessBounds) -> MetricsRecord:
    """Snapshot of the archive metrics; max fitness falls back to ``f_min`` when empty."""
    f = _values(a)
    return MetricsRecord(
        evaluations=int(evals),
        wall_time_s=float(clock()),
        coverage=len(f),
        qd_score=qd_score(f, b),
        max_fitness=float(f.max()) if len(f) else b.f_min,
    )


def write_metrics_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_HEADER)
        for r in records:
            w.writerow([repr(v) if isinstance(v, float) else v for v in astuple(r)])


def read_metrics_csv(path) -> list[MetricsRecord]:
    types = {f.name: f.type for f in fields(MetricsRecord)}
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        MetricsRecord(**{k: (int(v) if types[k] == "int" else float(v)) for k, v in row.items()})
        for row in rows
    ]


def write_profile_csv(p: ArchiveProfile, b: FitnessBounds, path, exact: bool = False) -> None:
    """Profile as ``fitness_threshold,count`` rows.

    The default is a uniform grid over the fitness bounds; ``exact=True``
    writes one row per distinct fitness instead.
    """
    if exact:
        rows = zip(p.distinct_fitnesses.tolist(), p.counts_above.tolist())
    else:
        t, c = p.resample(b)
        rows = zip(t.tolist(), np.asarray(c).tolist())
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(PROFILE_HEADER)
        for thr, count in rows:
            w.writerow([repr(float(thr)), int(count)])


def read_profile_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1].astype(np.int64)
