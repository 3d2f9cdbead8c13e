"""Grid and CVT archives with elitist per-cell replacement."""

from __future__ import annotations

import enum
import functools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import backend
from .core import ConfigError, Individual, RngStream, as_bounds, clamp_descriptor

SCHEMA_VERSION = 1


def _bounds_tuple(bounds) -> tuple[tuple[float, float], ...]:
    return tuple((float(lo), float(hi)) for lo, hi in as_bounds(bounds))


@dataclass(frozen=True)
class GridSpec:
    bd_bounds: tuple[tuple[float, float], ...]
    subdivisions: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "bd_bounds", _bounds_tuple(self.bd_bounds))
        object.__setattr__(self, "subdivisions", tuple(int(s) for s in self.subdivisions))
        if len(self.subdivisions) != len(self.bd_bounds):
            raise ConfigError("subdivisions and bd_bounds must have the same length")
        if any(s < 1 for s in self.subdivisions):
            raise ConfigError("each subdivision count must be >= 1")

    @property
    def capacity(self) -> int:
        return int(np.prod(self.subdivisions, dtype=np.int64))

    def to_dict(self) -> dict:
        return {"kind": "grid", "bd_bounds": [list(b) for b in self.bd_bounds],
                "subdivisions": list(self.subdivisions)}


@dataclass(frozen=True)
class CvtSpec:
    bd_bounds: tuple[tuple[float, float], ...]
    num_centroids: int
    kmeans_samples: int | None = None  # default 50 * num_centroids
    kmeans_max_iters: int = 100
    kmeans_tolerance: float = 1e-9
    centroid_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "bd_bounds", _bounds_tuple(self.bd_bounds))
        if self.kmeans_samples is None:
            object.__setattr__(self, "kmeans_samples", 50 * int(self.num_centroids))
        if self.num_centroids < 1 or self.kmeans_samples < 1 or self.kmeans_max_iters < 1:
            raise ConfigError("num_centroids, kmeans_samples and kmeans_max_iters must be positive")
        if self.kmeans_tolerance < 0:
            raise ConfigError("kmeans_tolerance must be >= 0")
        if self.num_centroids > self.kmeans_samples:
            raise ConfigError(
                f"num_centroids ({self.num_centroids}) exceeds kmeans_samples ({self.kmeans_samples})"
            )

    @property
    def capacity(self) -> int:
        return int(self.num_centroids)

    def to_dict(self) -> dict:
        return {"kind": "cvt", "bd_bounds": [list(b) for b in self.bd_bounds],
                "num_centroids": self.num_centroids, "kmeans_samples": self.kmeans_samples,
                "kmeans_max_iters": self.kmeans_max_iters, "kmeans_tolerance": self.kmeans_tolerance,
                "centroid_seed": self.centroid_seed}


def _frozen_rows(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr = arr.reshape(len(arr), -1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


def grid_cell_index(d, spec: GridSpec):
    """Row-major cell index of one descriptor (B,) or a batch (n, B).

    Descriptors on the upper bound fall in the last bin.
    """
    b = np.asarray(spec.bd_bounds)
    d = clamp_descriptor(d, spec.bd_bounds)
    sub = np.asarray(spec.subdivisions)
    bins = np.floor((d - b[:, 0]) / (b[:, 1] - b[:, 0]) * sub).astype(np.int64)
    bins = np.clip(bins, 0, sub - 1)
    idx = np.ravel_multi_index(np.moveaxis(bins, -1, 0), spec.subdivisions)
    return int(idx) if np.ndim(idx) == 0 else idx.astype(np.int64)


def cvt_cell_index(d, centroids):
    """Index of the nearest centroid (Euclidean); ties go to the lowest index."""
    centroids = np.ascontiguousarray(centroids, dtype=np.float64)
    if len(centroids) == 0:
        raise ConfigError("no centroids")
    d = np.asarray(d, dtype=np.float64)
    if d.shape[-1] != centroids.shape[1]:
        raise ConfigError(f"descriptor has {d.shape[-1]} components, centroids have {centroids.shape[1]}")
    idx = backend.kernels.nearest_centroid(np.ascontiguousarray(np.atleast_2d(d)), centroids)
    return int(idx[0]) if d.ndim == 1 else idx


@functools.lru_cache(maxsize=8)
def _centroids_cached(spec: CvtSpec) -> np.ndarray:
    b = np.asarray(spec.bd_bounds)
    rng = RngStream(spec.centroid_seed, 0).generator()
    samples = rng.uniform(b[:, 0], b[:, 1], size=(spec.kmeans_samples, len(b)))
    K = spec.num_centroids
    centroids = samples[np.sort(rng.choice(len(samples), size=K, replace=False))].copy()
    for _ in range(spec.kmeans_max_iters):
        dist, assign = cKDTree(centroids).query(samples)
        counts = np.bincount(assign, minlength=K)
        sums = np.zeros_like(centroids)
        for k in range(centroids.shape[1]):
            sums[:, k] = np.bincount(assign, weights=samples[:, k], minlength=K)
        new = centroids.copy()
        filled = counts > 0
        new[filled] = sums[filled] / counts[filled, None]
        empty = np.flatnonzero(~filled)
        if len(empty):
            # re-seed each empty cluster with a sample far from its assigned centroid
            far = np.argsort(-dist, kind="stable")[: len(empty)]
            new[empty] = samples[far]
        shift = np.max(np.linalg.norm(new - centroids, axis=1))
        centroids = new
        if shift < spec.kmeans_tolerance and len(empty) == 0:
            break
    centroids.setflags(write=False)
    return centroids


def build_centroids(spec: CvtSpec) -> np.ndarray:
    """Lloyd's k-means over uniform samples in the descriptor bounds.

    Deterministic given ``spec.centroid_seed``; results are cached per spec.
    """
    return _centroids_cached(spec)


class InsertKind(enum.Enum):
    INSERTED_NEW = "InsertedNew"
    REPLACED = "Replaced"
    REJECTED = "Rejected"


@dataclass(frozen=True)
class InsertOutcome:
    kind: InsertKind
    cell: int


class Archive:
    """At most one individual per cell; a candidate replaces the occupant only
    on strictly higher fitness.

    ``spec`` is a :class:`GridSpec` or :class:`CvtSpec`. CVT centroids are
    built from the spec unless given explicitly (e.g. when loading a dump).
    """

    def __init__(self, spec: GridSpec | CvtSpec, centroids: np.ndarray | None = None, task: dict | None = None):
        self.spec = spec
        self.task = task
        if isinstance(spec, CvtSpec):
            c = build_centroids(spec) if centroids is None else np.asarray(centroids, dtype=np.float64)
            if c.shape != (spec.num_centroids, len(spec.bd_bounds)):
                raise ConfigError(f"centroid array has shape {c.shape}")
            self.centroids = np.ascontiguousarray(c)
        elif isinstance(spec, GridSpec):
            self.centroids = None
        else:
            raise ConfigError(f"unsupported container spec {spec!r}")
        self._cells: dict[int, Individual] = {}
        self._fitness = np.full(self.capacity, np.nan)

    @property
    def capacity(self) -> int:
        return self.spec.capacity

    @property
    def bd_bounds(self):
        return self.spec.bd_bounds

    @property
    def is_grid(self) -> bool:
        return isinstance(self.spec, GridSpec)

    def cell_index(self, d):
        if self.is_grid:
            return grid_cell_index(d, self.spec)
        return cvt_cell_index(clamp_descriptor(d, self.bd_bounds), self.centroids)

    def __len__(self) -> int:
        return len(self._cells)

    def __contains__(self, cell: int) -> bool:
        return cell in self._cells

    def __getitem__(self, cell: int) -> Individual:
        return self._cells[cell]

    def __iter__(self) -> Iterator[Individual]:
        for cell in self.cells():
            yield self._cells[cell]

    def cells(self) -> list[int]:
        """Occupied cell indices in ascending order."""
        return sorted(self._cells)

    def items(self):
        return [(c, self._cells[c]) for c in self.cells()]

    def fitnesses(self) -> np.ndarray:
        return self._fitness[~np.isnan(self._fitness)]

    def empty_like(self) -> "Archive":
        return Archive(self.spec, centroids=self.centroids, task=self.task)

    def copy(self) -> "Archive":
        other = self.empty_like()
        other._cells = dict(self._cells)
        other._fitness = self._fitness.copy()
        return other

    def _insert_at(self, cell: int, ind: Individual) -> InsertOutcome:
        current = self._cells.get(cell)
        if current is None:
            kind = InsertKind.INSERTED_NEW
        elif current.fitness < ind.fitness:
            kind = InsertKind.REPLACED
        else:
            return InsertOutcome(InsertKind.REJECTED, cell)
        self._cells[cell] = ind
        self._fitness[cell] = ind.fitness
        return InsertOutcome(kind, cell)

    def try_insert(self, ind: Individual) -> InsertOutcome:
        return self._insert_at(self.cell_index(ind.descriptor), ind)

    def add_batch(self, genotypes, fitness, descriptors, seeds) -> list[InsertOutcome]:
        """Insert a batch sequentially, in order."""
        g = _frozen_rows(genotypes, "genotype")
        d = _frozen_rows(clamp_descriptor(np.atleast_2d(descriptors), self.bd_bounds), "descriptor")
        fit = np.asarray(fitness, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(fit)):
            raise ValueError("fitness must be finite")
        fit = fit.tolist()
        seeds = [int(s) for s in np.asarray(seeds).reshape(-1)]
        if not len(g) == len(d) == len(fit) == len(seeds):
            raise ValueError("batch arrays differ in length")
        cells = np.atleast_1d(self.cell_index(d)).tolist()
        out = []
        for i, cell in enumerate(cells):
            current = self._cells.get(cell)
            if current is not None and not current.fitness < fit[i]:
                out.append(InsertOutcome(InsertKind.REJECTED, cell))
                continue
            out.append(self._insert_at(cell, Individual._trusted(g[i], fit[i], d[i], seeds[i])))
        return out

    # ------------------------------------------------------------ serialisation

    def to_dict(self) -> dict:
        container = self.spec.to_dict()
        if self.centroids is not None:
            container["centroids"] = self.centroids.tolist()
        return {
            "schema_version": SCHEMA_VERSION,
            "container": container,
            "capacity": self.capacity,
            "task": self.task,
            "cells": [
                {
                    "cell": cell,
                    "descriptor": ind.descriptor.tolist(),
                    "fitness": ind.fitness,
                    "eval_seed": ind.eval_seed,
                    "genotype": ind.genotype.tolist(),
                }
                for cell, ind in self.items()
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Archive":
        if data.get("schema_version") != SCHEMA_VERSION:
            raise ConfigError(f"unsupported archive schema version {data.get('schema_version')!r}")
        c = dict(data["container"])
        kind = c.pop("kind")
        centroids = c.pop("centroids", None)
        spec = GridSpec(**c) if kind == "grid" else CvtSpec(**c)
        archive = cls(spec, centroids=centroids, task=data.get("task"))
        for rec in data["cells"]:
            ind = Individual(rec["genotype"], rec["fitness"], rec["descriptor"], rec["eval_seed"])
            cell = int(rec["cell"])
            if not 0 <= cell < archive.capacity:
                raise ConfigError(f"cell index {cell} outside archive capacity {archive.capacity}")
            archive._cells[cell] = ind
            archive._fitness[cell] = ind.fitness
        return archive

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    def dump(self, path) -> None:
        Path(path).write_text(self.dumps())

    @classmethod
    def load(cls, path) -> "Archive":
        return cls.from_dict(json.loads(Path(path).read_text()))


def coverage(a: Archive) -> int:
    return len(a)


def try_insert(a: Archive, ind: Individual) -> InsertOutcome:
    return a.try_insert(ind)


def make_grid(bd_bounds: Sequence, subdivisions: Sequence[int], task: dict | None = None) -> Archive:
    return Archive(GridSpec(tuple(map(tuple, bd_bounds)), tuple(subdivisions)), task=task)
