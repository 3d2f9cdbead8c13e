"""Stochastic evaluation tasks.

Two locomotion surrogates driven by a small tanh MLP policy:

* ``omni``: a 2-D point mass with first-order velocity response. The
  descriptor is the final position, fitness rewards survival and penalises
  squared control effort.
* ``uni``: a 1-D forward walker with ``I`` actuator channels. Channel ``i``
  is "in contact" whenever its control is positive; the descriptor is the
  per-channel duty cycle, fitness adds the forward displacement.

plus an analytic ``synthetic`` task used by the metric tests.

Each evaluation owns a counter-based Gaussian stream keyed by its seed
(see :func:`qdbench.core.gaussian_stream`), so an episode is a pure function
of (genotype, task, seed).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any, Sequence

import numpy as np

from . import backend
from .core import ConfigError, FitnessBounds, as_bounds, clamp_descriptor, gaussian_stream

OMNI, UNI, SYNTHETIC = "omni", "uni", "synthetic"


class FitnessOutOfBounds(ConfigError):
    pass


@dataclass(frozen=True)
class PolicySpec:
    layer_sizes: tuple[int, ...]
    activation: str = "tanh"

    def __post_init__(self):
        if len(self.layer_sizes) < 2 or any(int(s) < 1 for s in self.layer_sizes):
            raise ConfigError(f"invalid layer sizes {self.layer_sizes}")
        if self.activation != "tanh":
            raise ConfigError("only the tanh activation is supported")

    @property
    def param_count(self) -> int:
        s = self.layer_sizes
        return sum(a * b + b for a, b in zip(s[:-1], s[1:]))

    @property
    def sizes_array(self) -> np.ndarray:
        return np.asarray(self.layer_sizes, dtype=np.int64)


@dataclass(frozen=True)
class TaskSpec:
    name: str
    kind: str
    genotype_dim: int
    bd_dim: int
    bd_bounds: tuple[tuple[float, float], ...]
    fitness_bounds: FitnessBounds
    episode_length: int
    noise_scale: float
    task_params: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in (OMNI, UNI, SYNTHETIC):
            raise ConfigError(f"unknown task kind {self.kind!r}")
        if self.episode_length < 1:
            raise ConfigError("episode_length must be >= 1")
        if self.noise_scale < 0:
            raise ConfigError("noise_scale must be >= 0")
        if len(self.bd_bounds) != self.bd_dim:
            raise ConfigError("bd_bounds length must equal bd_dim")
        as_bounds(self.bd_bounds)
        if self.kind != SYNTHETIC and policy_spec(self).param_count != self.genotype_dim:
            raise ConfigError(
                f"policy has {policy_spec(self).param_count} parameters, "
                f"task declares genotype_dim={self.genotype_dim}"
            )
        if self.kind == SYNTHETIC and self.genotype_dim < self.bd_dim:
            raise ConfigError("synthetic task needs genotype_dim >= bd_dim")

    @property
    def deterministic(self) -> bool:
        return self.noise_scale == 0

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "genotype_dim": self.genotype_dim,
            "bd_dim": self.bd_dim,
            "bd_bounds": [list(b) for b in self.bd_bounds],
            "fitness_bounds": [self.fitness_bounds.f_min, self.fitness_bounds.f_max],
            "episode_length": self.episode_length,
            "noise_scale": self.noise_scale,
            "task_params": dict(self.task_params),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        return cls(
            name=d["name"],
            kind=d["kind"],
            genotype_dim=int(d["genotype_dim"]),
            bd_dim=int(d["bd_dim"]),
            bd_bounds=tuple((float(lo), float(hi)) for lo, hi in d["bd_bounds"]),
            fitness_bounds=FitnessBounds(*map(float, d["fitness_bounds"])),
            episode_length=int(d["episode_length"]),
            noise_scale=float(d["noise_scale"]),
            task_params=dict(d.get("task_params", {})),
        )


@dataclass
class EpisodeTrace:
    states: np.ndarray
    controls: np.ndarray
    reward_terms: np.ndarray  # (T, 3): r_forward, r_survive, r_torque
    contacts: np.ndarray | None = None
    final_position: np.ndarray | None = None


def policy_spec(task: TaskSpec) -> PolicySpec:
    hidden = tuple(int(h) for h in task.task_params.get("hidden", (8, 8)))
    if task.kind == OMNI:
        return PolicySpec((4, *hidden, 2))
    if task.kind == UNI:
        return PolicySpec((3, *hidden, task.bd_dim))
    raise ConfigError("the synthetic task has no policy")


def mlp_forward(g, spec: PolicySpec, obs) -> np.ndarray:
    """Deterministic forward pass; every layer is squashed by tanh."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape[-1] != spec.param_count:
        raise ConfigError(f"genotype has {g.shape[-1]} parameters, policy needs {spec.param_count}")
    obs = np.asarray(obs, dtype=np.float64)
    if obs.shape[-1] != spec.layer_sizes[0]:
        raise ConfigError(f"observation has {obs.shape[-1]} entries, policy expects {spec.layer_sizes[0]}")
    single = g.ndim == 1
    out = backend.kernels.mlp_forward(
        np.ascontiguousarray(np.atleast_2d(g)),
        spec.sizes_array,
        np.ascontiguousarray(np.atleast_2d(obs)),
    )
    return out[0] if single else out


# ---------------------------------------------------------------- presets


def _omni(name, noise_scale=0.05, episode_length=100, hidden=(8, 8), bound=5.0, **params) -> TaskSpec:
    p = {"r_survive": 1.0, "torque_coef": 0.1, "dt": 0.1, "response": 0.2, "obs_scale": bound}
    p.update(params)
    p["hidden"] = list(hidden)
    T = episode_length
    # controls lie in (-1, 1)^2, so the torque cost per step is below 2 * torque_coef
    fb = FitnessBounds(T * (p["r_survive"] - 2 * p["torque_coef"]), T * p["r_survive"])
    pol = PolicySpec((4, *hidden, 2))
    return TaskSpec(name, OMNI, pol.param_count, 2, ((-bound, bound), (-bound, bound)), fb, T, noise_scale, p)


def _uni(name, channels, noise_scale=0.05, episode_length=100, hidden=(8, 8), **params) -> TaskSpec:
    p = {"r_survive": 1.0, "torque_coef": 0.1, "forward_gain": 1.0, "dt": 1.0, "period": 20.0}
    p.update(params)
    p["hidden"] = list(hidden)
    T = episode_length
    # forward noise enters the sum of T displacements; 10 sigma of slack
    margin = 10.0 * noise_scale * p["dt"] * math.sqrt(T)
    lo = T * (p["r_survive"] - channels * p["torque_coef"]) - margin
    hi = T * (p["r_survive"] + p["forward_gain"] * p["dt"]) + margin
    pol = PolicySpec((3, *hidden, channels))
    return TaskSpec(
        name, UNI, pol.param_count, channels, ((0.0, 1.0),) * channels, FitnessBounds(lo, hi), T, noise_scale, p
    )


def _synthetic(name, noise_scale=0.0, genotype_dim=10, bd_dim=2, bound=1.0, **params) -> TaskSpec:
    p = {"fitness_noise": 1.0, "bd_noise": 1.0, "genotype_bound": 2.0}
    p.update(params)
    margin = 10.0 * noise_scale * max(p["fitness_noise"], 0.0)
    lo = -genotype_dim * p["genotype_bound"] ** 2 - margin
    hi = margin if margin > 0 else 0.0
    return TaskSpec(
        name, SYNTHETIC, genotype_dim, bd_dim, ((-bound, bound),) * bd_dim, FitnessBounds(lo, hi), 1, noise_scale, p
    )


# name -> (factory, default grid subdivisions)
PRESETS = {
    "pointmass-omni": (lambda **kw: _omni("pointmass-omni", **kw), (100, 100)),
    "surrogate-uni": (lambda **kw: _uni("surrogate-uni", 4, **kw), (5, 5, 5, 5)),
    "surrogate-uni2": (lambda **kw: _uni("surrogate-uni2", 2, **kw), (30, 30)),
    "surrogate-uni6": (lambda **kw: _uni("surrogate-uni6", 6, **kw), (5,) * 6),
    "synthetic": (lambda **kw: _synthetic("synthetic", **kw), (30, 30)),
}

# BD shapes and cell counts of the reference benchmark suite, usable as grid presets
TABLE_GRIDS = {
    "walker-uni": (30, 30),
    "halfcheetah-uni": (30, 30),
    "ant-uni": (5, 5, 5, 5),
    "humanoid-uni": (30, 30),
    "hexapod-uni": (5,) * 6,
    "ant-omni": (100, 100),
    "humanoid-omni": (100, 100),
    "hexapod-omni": (100, 100),
}


def make_task(preset: str, **overrides) -> TaskSpec:
    """Build a task from a preset name; keyword overrides go to the preset factory.

    Unknown keywords are stored as task parameters (e.g. ``torque_coef=0.2``).
    """
    try:
        factory, _ = PRESETS[preset]
    except KeyError:
        raise ConfigError(f"unknown task preset {preset!r}; choose from {sorted(PRESETS)}") from None
    fb = overrides.pop("fitness_bounds", None)
    task = factory(**overrides)
    if fb is not None:
        task = replace(task, fitness_bounds=FitnessBounds(*map(float, fb)))
    return task


def default_subdivisions(task: TaskSpec) -> tuple[int, ...]:
    if task.name in PRESETS:
        subdiv = PRESETS[task.name][1]
        if len(subdiv) == task.bd_dim:
            return subdiv
    return (10,) * task.bd_dim


def _check_genotypes(genotypes, task: TaskSpec) -> np.ndarray:
    g = np.ascontiguousarray(np.atleast_2d(np.asarray(genotypes, dtype=np.float64)))
    if g.shape[1] != task.genotype_dim:
        raise ConfigError(f"genotype length {g.shape[1]} != task genotype_dim {task.genotype_dim}")
    return g


# ---------------------------------------------------------------- evaluation


def _seed_array(seeds) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(seeds, dtype=np.uint64).reshape(-1))


def _omni_batch(g, task, seeds, record=False, kern=None):
    kern = kern or backend.kernels
    p = task.task_params
    return kern.rollout_omni(
        g, policy_spec(task).sizes_array, _seed_array(seeds), task.episode_length, float(task.noise_scale),
        float(p["dt"]), float(p["response"]), float(p["obs_scale"]),
        float(p["r_survive"]), float(p["torque_coef"]), record,
    )


def _uni_batch(g, task, seeds, record=False, kern=None):
    kern = kern or backend.kernels
    p = task.task_params
    return kern.rollout_uni(
        g, policy_spec(task).sizes_array, _seed_array(seeds), task.episode_length, float(task.noise_scale),
        float(p["forward_gain"]), float(p["dt"]), float(p["period"]),
        float(p["r_survive"]), float(p["torque_coef"]), record,
    )


def _synthetic_batch(g, task, seeds):
    B, s = task.bd_dim, task.noise_scale
    p = task.task_params
    desc = clamp_descriptor(g[:, :B], task.bd_bounds)
    fit = np.zeros(len(g))
    for k in range(g.shape[1]):
        fit = fit - g[:, k] * g[:, k]
    if s > 0:
        # normal 0 perturbs fitness, normals 1..B the descriptor
        eps = gaussian_stream(_seed_array(seeds), B + 1)
        fit = fit + s * p["fitness_noise"] * eps[:, 0]
        desc = desc + s * p["bd_noise"] * eps[:, 1:]
    return fit, clamp_descriptor(desc, task.bd_bounds)


def evaluate_omni(g, spec: TaskSpec, seed: int):
    """Roll out one omni-directional episode.

    Returns ``(fitness, descriptor, trace)``; the descriptor is the final
    position clamped to the task's descriptor bounds.
    """
    if spec.kind != OMNI:
        raise ConfigError(f"{spec.name} is not an omni task")
    g = _check_genotypes(g, spec)
    fit, final, (states, controls, torques) = _omni_batch(g, spec, [seed], record=True)
    T = spec.episode_length
    terms = np.column_stack([np.zeros(T), np.full(T, float(spec.task_params["r_survive"])), torques[0]])
    trace = EpisodeTrace(states[0], controls[0], terms, final_position=final[0].copy())
    return float(fit[0]), clamp_descriptor(final[0], spec.bd_bounds), trace


def evaluate_uni(g, spec: TaskSpec, seed: int):
    """Roll out one uni-directional episode; descriptor is the per-channel duty cycle."""
    if spec.kind != UNI:
        raise ConfigError(f"{spec.name} is not a uni task")
    g = _check_genotypes(g, spec)
    fit, duty, (states, controls, terms, contacts) = _uni_batch(g, spec, [seed], record=True)
    trace = EpisodeTrace(states[0], controls[0], terms[0], contacts=contacts[0])
    return float(fit[0]), duty[0], trace


def evaluate_synthetic(g, spec: TaskSpec, seed: int):
    if spec.kind != SYNTHETIC:
        raise ConfigError(f"{spec.name} is not a synthetic task")
    fit, desc = _synthetic_batch(_check_genotypes(g, spec), spec, [seed])
    return float(fit[0]), desc[0]


def evaluate(g, spec: TaskSpec, seed: int):
    """Single evaluation returning ``(fitness, descriptor)`` for any task kind."""
    fit, desc = evaluate_batch(np.atleast_2d(g), spec, [seed])
    return float(fit[0]), desc[0]


def _evaluate_chunk(g, task, seeds):
    if task.kind == OMNI:
        fit, final, _ = _omni_batch(g, task, seeds)
        return fit, clamp_descriptor(final, task.bd_bounds)
    if task.kind == UNI:
        fit, duty, _ = _uni_batch(g, task, seeds)
        return fit, duty
    return _synthetic_batch(g, task, seeds)


def evaluate_batch(genotypes, task: TaskSpec, seeds: Sequence[int], workers: int = 1,
                   check_bounds: bool = True):
    """Evaluate many genotypes, each with its own seed.

    Every episode is an independent function of (genotype, seed), so the
    result does not depend on ``workers``. Raises
    :class:`FitnessOutOfBounds` when a fitness escapes the task's declared
    bounds.
    """
    g = _check_genotypes(genotypes, task)
    seeds = _seed_array(seeds)
    if len(seeds) != len(g):
        raise ValueError("need one seed per genotype")
    if workers <= 1 or len(g) < 2 * workers:
        fit, desc = _evaluate_chunk(g, task, seeds)
    else:
        splits = np.array_split(np.arange(len(g)), workers)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(
                lambda idx: _evaluate_chunk(np.ascontiguousarray(g[idx]), task, seeds[idx]),
                splits,
            ))
        fit = np.concatenate([p[0] for p in parts])
        desc = np.concatenate([p[1] for p in parts])
    if check_bounds:
        fb = task.fitness_bounds
        bad = (fit < fb.f_min) | (fit > fb.f_max)
        if np.any(bad):
            raise FitnessOutOfBounds(
                f"fitness {fit[bad][0]!r} outside declared bounds [{fb.f_min}, {fb.f_max}] "
                f"for task {task.name}; widen fitness_bounds in the configuration"
            )
    return fit, desc
