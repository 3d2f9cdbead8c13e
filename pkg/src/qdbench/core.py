"""Shared value types, configuration errors and the seeding contract."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

Genotype = np.ndarray
Descriptor = np.ndarray
Bounds = Sequence[tuple[float, float]]

_U64_MASK = (1 << 64) - 1


class ConfigError(ValueError):
    """Raised for inconsistent configuration (dimensions, bounds, budgets)."""


def _frozen(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64).reshape(-1)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FitnessBounds:
    """Fixed fitness interval used for normalisation.

    Set once per task configuration; never derived from archive contents.
    """

    f_min: float
    f_max: float

    def __post_init__(self):
        if not (np.isfinite(self.f_min) and np.isfinite(self.f_max)):
            raise ConfigError("fitness bounds must be finite")
        if not self.f_min < self.f_max:
            raise ConfigError(f"f_min ({self.f_min}) must be < f_max ({self.f_max})")

    @property
    def width(self) -> float:
        return self.f_max - self.f_min

    def contains(self, f: float) -> bool:
        return self.f_min <= f <= self.f_max


@dataclass(frozen=True, eq=False)
class Individual:
    genotype: Genotype
    fitness: float
    descriptor: Descriptor
    eval_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "genotype", _frozen(self.genotype, "genotype"))
        object.__setattr__(self, "descriptor", _frozen(self.descriptor, "descriptor"))
        object.__setattr__(self, "fitness", float(self.fitness))
        object.__setattr__(self, "eval_seed", int(self.eval_seed))
        if not np.isfinite(self.fitness):
            raise ValueError("fitness must be finite")

    @classmethod
    def _trusted(cls, genotype: np.ndarray, fitness: float, descriptor: np.ndarray, eval_seed: int):
        # caller guarantees finite, read-only float64 rows and python scalars
        ind = object.__new__(cls)
        object.__setattr__(ind, "genotype", genotype)
        object.__setattr__(ind, "fitness", fitness)
        object.__setattr__(ind, "descriptor", descriptor)
        object.__setattr__(ind, "eval_seed", eval_seed)
        return ind

    def __eq__(self, other):
        if not isinstance(other, Individual):
            return NotImplemented
        return (
            self.fitness == other.fitness
            and self.eval_seed == other.eval_seed
            and np.array_equal(self.genotype, other.genotype)
            and np.array_equal(self.descriptor, other.descriptor)
        )

    __hash__ = None


_GOLDEN = 0x9E3779B97F4A7C15
_SEED_INIT = 0x243F6A8885A308D3


def mix64(x: int) -> int:
    """SplitMix64 finaliser on a Python int (taken modulo 2**64)."""
    x &= _U64_MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _U64_MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _U64_MASK
    return x ^ (x >> 31)


def derive_seed(*keys: int) -> int:
    """Hash a tuple of non-negative integers into a 64-bit seed.

    Used for every derived stream (replication seeds, per-evaluation seeds,
    reevaluation seeds) so results never depend on scheduling order.
    """
    h = _SEED_INIT
    for k in keys:
        h = mix64(h ^ mix64(int(k) + _GOLDEN))
    return h


def _mix64_array(x: np.ndarray) -> np.ndarray:
    x = x ^ (x >> np.uint64(30))
    x = x * np.uint64(0xBF58476D1CE4E5B9)
    x = x ^ (x >> np.uint64(27))
    x = x * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def derive_seeds(*prefix: int, index) -> np.ndarray:
    """Vectorised ``derive_seed(*prefix, i)`` for every ``i`` in ``index``."""
    h = np.uint64(derive_seed(*prefix)) if prefix else np.uint64(_SEED_INIT)
    k = np.asarray(index, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix64_array(h ^ _mix64_array(k + np.uint64(_GOLDEN)))


def gaussian_stream(seeds, count: int) -> np.ndarray:
    """First ``count`` standard normals of each evaluation stream, shape (n, count).

    Counter-based: uniform ``c`` of stream ``s`` is SplitMix64 output ``c``
    for state ``s``; consecutive uniform pairs go through Box-Muller. The
    compiled kernels generate the same sequence in C.
    """
    seeds = np.asarray(seeds, dtype=np.uint64).reshape(-1, 1)
    pairs = (count + 1) // 2
    c = np.arange(2 * pairs, dtype=np.uint64) + np.uint64(1)
    with np.errstate(over="ignore"):
        bits = _mix64_array(seeds + c * np.uint64(_GOLDEN))
    u = (bits >> np.uint64(11)).astype(np.float64) * 2.0**-53
    u1, u2 = u[:, 0::2], u[:, 1::2]
    r = np.sqrt(-2.0 * np.log(1.0 - u1))
    out = np.empty((len(seeds), 2 * pairs))
    out[:, 0::2] = r * np.cos(2.0 * np.pi * u2)
    out[:, 1::2] = r * np.sin(2.0 * np.pi * u2)
    return out[:, :count]


@dataclass(frozen=True)
class RngStream:
    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        """A fresh generator positioned at the start of this stream."""
        key = [int(self.seed) & _U64_MASK, int(self.stream_id) & _U64_MASK]
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def as_bounds(bounds: Bounds) -> np.ndarray:
    arr = np.asarray(bounds, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ConfigError(f"bounds must be a sequence of (lo, hi) pairs, got shape {arr.shape}")
    if np.any(arr[:, 0] >= arr[:, 1]):
        raise ConfigError(f"every bound needs lo < hi, got {arr.tolist()}")
    return arr


def clamp_descriptor(d, bounds: Bounds) -> np.ndarray:
    """Clamp each component into its [lo, hi] interval.

    Works on a single descriptor of shape (B,) or a batch of shape (n, B).
    """
    b = as_bounds(bounds)
    d = np.asarray(d, dtype=np.float64)
    if d.shape[-1] != b.shape[0]:
        raise ConfigError(f"descriptor has {d.shape[-1]} components, bounds have {b.shape[0]}")
    return np.minimum(np.maximum(d, b[:, 0]), b[:, 1])
