"""MAP-Elites, CVT-MAP-Elites and Random Search."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .archive import Archive, CvtSpec, GridSpec
from .core import ConfigError, Individual, RngStream, derive_seeds
from .metrics import Clock, MetricsRecord, record_metrics
from .tasks import TaskSpec, evaluate_batch

logger = logging.getLogger(__name__)

MAP_ELITES = "map-elites"
CVT_MAP_ELITES = "cvt-map-elites"
RANDOM_SEARCH = "random-search"
ALGORITHMS = (MAP_ELITES, CVT_MAP_ELITES, RANDOM_SEARCH)

# stream ids under the run seed
_VARIATION_STREAM = 1
_EVAL_STREAM = 2


@dataclass(frozen=True)
class AlgoConfig:
    algorithm: str = MAP_ELITES
    batch_size: int = 256
    init_batches: int = 4
    mutation_sigma: float | None = None  # default: 0.02 * init_range width
    eval_budget: int = 50_000
    seed: int = 0
    init_range: tuple[float, float] = (-1.0, 1.0)
    workers: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        object.__setattr__(self, "init_range", tuple(float(x) for x in self.init_range))
        lo, hi = self.init_range
        if lo > hi:
            raise ConfigError("init_range must have lo <= hi")
        if self.mutation_sigma is None:
            object.__setattr__(self, "mutation_sigma", 0.02 * (hi - lo))
        if self.batch_size < 1 or self.init_batches < 1:
            raise ConfigError("batch_size and init_batches must be positive")
        if self.algorithm != RANDOM_SEARCH and not self.mutation_sigma > 0:
            raise ConfigError("mutation_sigma must be > 0")
        if self.eval_budget < self.init_batches * self.batch_size:
            raise ConfigError(
                f"eval_budget ({self.eval_budget}) smaller than initialisation "
                f"({self.init_batches} x {self.batch_size})"
            )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["init_range"] = list(self.init_range)
        return d


@dataclass
class RunResult:
    archive: Archive
    log: list[MetricsRecord] = field(default_factory=list)
    evaluations: int = 0
    wall_time_s: float = 0.0


def random_genotypes(n: int, D: int, init_range, rng: np.random.Generator) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be >= 1")
    lo, hi = init_range
    if lo == hi:
        return np.full((n, D), float(lo))
    return rng.uniform(lo, hi, size=(n, D))


def select_uniform(a: Archive, n: int, rng: np.random.Generator) -> list[Individual]:
    """``n`` draws with replacement, uniform over occupied cells."""
    if len(a) == 0:
        raise ValueError("cannot select from an empty archive; seed it with random genotypes first")
    cells = a.cells()
    picks = rng.integers(len(cells), size=n)
    return [a[cells[i]] for i in picks]


def mutate_gaussian(g, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Add isotropic Gaussian noise to one genotype or a batch; no clipping."""
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    g = np.asarray(g, dtype=np.float64)
    return g + rng.normal(0.0, sigma, size=g.shape)


def _check_container(algo: AlgoConfig, spec) -> None:
    if algo.algorithm == MAP_ELITES and not isinstance(spec, GridSpec):
        raise ConfigError("map-elites uses a grid container")
    if algo.algorithm == CVT_MAP_ELITES and not isinstance(spec, CvtSpec):
        raise ConfigError("cvt-map-elites uses a CVT container")


def run(algo: AlgoConfig, task: TaskSpec, archive_spec: GridSpec | CvtSpec,
        checkpoint_every: int = 0,
        on_checkpoint: Callable[[Archive, int], None] | None = None) -> RunResult:
    """Run one optimisation until exactly ``eval_budget`` evaluations are spent.

    Metrics are logged after every batch. ``on_checkpoint(archive, evals)`` is
    called every ``checkpoint_every`` batches (if > 0) and always once at the
    end; anything it evaluates is not counted against the budget.
    """
    _check_container(algo, archive_spec)
    if len(archive_spec.bd_bounds) != task.bd_dim:
        raise ConfigError("archive dimensionality does not match the task descriptor")
    archive = Archive(archive_spec, task=task.to_dict())
    rng = RngStream(algo.seed, _VARIATION_STREAM).generator()
    clock = Clock()
    result = RunResult(archive)
    evals = 0
    batch_no = 0

    while evals < algo.eval_budget:
        n = min(algo.batch_size, algo.eval_budget - evals)
        if batch_no < algo.init_batches or algo.algorithm == RANDOM_SEARCH:
            genotypes = random_genotypes(n, task.genotype_dim, algo.init_range, rng)
        else:
            parents = select_uniform(archive, n, rng)
            genotypes = mutate_gaussian(np.stack([p.genotype for p in parents]), algo.mutation_sigma, rng)
        seeds = derive_seeds(algo.seed, _EVAL_STREAM, index=np.arange(evals, evals + n))
        fit, desc = evaluate_batch(genotypes, task, seeds, workers=algo.workers)
        archive.add_batch(genotypes, fit, desc, seeds)
        evals += n
        batch_no += 1
        result.log.append(record_metrics(archive, evals, clock, task.fitness_bounds))
        if on_checkpoint is not None and checkpoint_every > 0 and batch_no % checkpoint_every == 0 \
                and evals < algo.eval_budget:
            on_checkpoint(archive, evals)

    result.evaluations = evals
    result.wall_time_s = clock()
    if on_checkpoint is not None:
        on_checkpoint(archive, evals)
    last = result.log[-1]
    logger.info("%s on %s: %d evals, coverage %d, qd_score %.3f, %.1fs", algo.algorithm, task.name,
                evals, last.coverage, last.qd_score, result.wall_time_s)
    return result
