import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qdbench.core import ConfigError, FitnessBounds, RngStream
from qdbench.tasks import (
    PRESETS,
    FitnessOutOfBounds,
    PolicySpec,
    TaskSpec,
    evaluate,
    evaluate_batch,
    evaluate_omni,
    evaluate_synthetic,
    evaluate_uni,
    make_task,
    mlp_forward,
    policy_spec,
)

OMNI = make_task("pointmass-omni", noise_scale=0.0)
UNI = make_task("surrogate-uni", noise_scale=0.0)
SYN = make_task("synthetic")


def test_presets_shapes():
    assert OMNI.genotype_dim == policy_spec(OMNI).param_count == 130
    assert OMNI.bd_dim == 2 and OMNI.bd_bounds == ((-5.0, 5.0), (-5.0, 5.0))
    assert UNI.bd_dim == 4 and UNI.episode_length == 100
    assert make_task("surrogate-uni6").bd_dim == 6
    for name in PRESETS:
        task = make_task(name)
        assert TaskSpec.from_dict(task.to_dict()) == task


def test_unknown_preset():
    with pytest.raises(ConfigError):
        make_task("hopper")


def test_mlp_zero_genotype():
    spec = PolicySpec((4, 8, 8, 2))
    out = mlp_forward(np.zeros(spec.param_count), spec, [0.3, -1.0, 2.0, 5.0])
    assert np.array_equal(out, [0.0, 0.0])


def test_mlp_single_identity_layer():
    spec = PolicySpec((1, 1))
    out = mlp_forward([1.0, 0.0], spec, [0.1])
    assert out.shape == (1,)
    assert out[0] == pytest.approx(math.tanh(0.1))
    assert abs(out[0] - 0.1) < 1e-3


def test_mlp_matches_numpy_reference():
    spec = PolicySpec((3, 5, 4))
    rng = np.random.default_rng(0)
    g = rng.normal(size=spec.param_count)
    obs = rng.normal(size=3)
    w1 = g[:15].reshape(3, 5)
    b1 = g[15:20]
    w2 = g[20:40].reshape(5, 4)
    b2 = g[40:44]
    ref = np.tanh(np.tanh(obs @ w1 + b1) @ w2 + b2)
    assert np.allclose(mlp_forward(g, spec, obs), ref, atol=1e-14)


def test_mlp_shape_and_errors():
    spec = PolicySpec((4, 8, 8, 2))
    assert mlp_forward(np.ones(130) * 0.1, spec, np.zeros(4)).shape == (2,)
    with pytest.raises(ConfigError):
        mlp_forward(np.zeros(10), spec, np.zeros(4))
    with pytest.raises(ConfigError):
        mlp_forward(np.zeros(130), spec, np.zeros(3))


def test_omni_zero_genotype():
    f, d, trace = evaluate_omni(np.zeros(130), OMNI, seed=1)
    assert f == OMNI.episode_length * OMNI.task_params["r_survive"]
    assert np.array_equal(d, [0.0, 0.0])
    assert trace.states.shape == (101, 4) and trace.controls.shape == (100, 2)
    assert np.all(trace.reward_terms[:, 2] == 0)


def test_omni_deterministic_and_seed_free_without_noise():
    g = RngStream(0, 0).generator().uniform(-1, 1, 130)
    a = evaluate_omni(g, OMNI, 3)
    b = evaluate_omni(g, OMNI, 3)
    c = evaluate_omni(g, OMNI, 99)
    assert a[0] == b[0] == c[0]
    assert np.array_equal(a[1], c[1])


def test_omni_noise_changes_descriptor():
    task = make_task("pointmass-omni", noise_scale=0.1)
    g = RngStream(0, 0).generator().uniform(-1, 1, 130)
    _, d1, _ = evaluate_omni(g, task, 1)
    _, d2, _ = evaluate_omni(g, task, 2)
    _, d1b, _ = evaluate_omni(g, task, 1)
    assert not np.array_equal(d1, d2)
    assert np.array_equal(d1, d1b)


def test_omni_trace_consistent_with_fitness():
    task = make_task("pointmass-omni", noise_scale=0.05)
    g = RngStream(2, 0).generator().uniform(-1, 1, 130)
    f, d, trace = evaluate_omni(g, task, 5)
    terms = trace.reward_terms
    assert np.all(terms[:, 2] >= 0)
    assert f == pytest.approx(np.sum(terms[:, 1] - terms[:, 2]), abs=1e-9)
    assert np.allclose(trace.final_position, trace.states[-1, :2])
    assert np.array_equal(d, np.clip(trace.final_position, -5, 5))


def test_uni_zero_genotype():
    f, d, trace = evaluate_uni(np.zeros(UNI.genotype_dim), UNI, 0)
    assert np.array_equal(d, np.zeros(4))
    assert f == UNI.episode_length * UNI.task_params["r_survive"]
    assert set(np.unique(trace.contacts)) <= {0}


def _bias_only(task, value):
    spec = policy_spec(task)
    g = np.zeros(spec.param_count)
    # last layer biases are the final n_out entries
    g[-spec.layer_sizes[-1]:] = value
    return g


def test_uni_saturated_bias_gives_full_contact():
    f, d, trace = evaluate_uni(_bias_only(UNI, 20.0), UNI, 0)
    assert np.array_equal(d, np.ones(4))
    assert set(np.unique(trace.contacts)) == {1}
    assert np.all(trace.reward_terms[:, 2] >= 0)
    assert f == pytest.approx(np.sum(trace.reward_terms @ np.array([1.0, 1.0, -1.0])), abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.0, 0.3))
def test_descriptor_and_fitness_ranges(seed, noise):
    rng = np.random.default_rng(seed)
    for preset in ("pointmass-omni", "surrogate-uni"):
        task = make_task(preset, noise_scale=noise)
        g = rng.uniform(-2, 2, size=(4, task.genotype_dim))
        fit, desc = evaluate_batch(g, task, rng.integers(0, 2**63, size=4, dtype=np.uint64))
        b = np.asarray(task.bd_bounds)
        assert np.all((desc >= b[:, 0]) & (desc <= b[:, 1]))
        assert np.all((fit >= task.fitness_bounds.f_min) & (fit <= task.fitness_bounds.f_max))
        if preset == "pointmass-omni":
            assert np.all(fit <= task.episode_length * task.task_params["r_survive"])


def test_synthetic_examples():
    f, d = evaluate_synthetic(np.zeros(10), SYN, 0)
    assert f == 0.0 and np.array_equal(d, [0.0, 0.0])
    g = np.zeros(10)
    g[:2] = [0.3, 0.4]
    f, d = evaluate_synthetic(g, SYN, 0)
    assert np.array_equal(d, [0.3, 0.4])
    assert f == pytest.approx(-0.25, abs=1e-15)
    f7, d7 = evaluate_synthetic(g, SYN, 7)
    assert f7 == f and np.array_equal(d7, d)


def test_batch_determinism_and_workers():
    task = make_task("pointmass-omni", noise_scale=0.2)
    rng = np.random.default_rng(1)
    g = rng.uniform(-1, 1, size=(64, 130))
    seeds = np.arange(64, dtype=np.uint64) * 7919
    f1, d1 = evaluate_batch(g, task, seeds)
    f2, d2 = evaluate_batch(g, task, seeds, workers=4)
    assert np.array_equal(f1, f2) and np.array_equal(d1, d2)
    f, d = evaluate(g[5], task, int(seeds[5]))
    assert f == f1[5] and np.array_equal(d, d1[5])


def test_fitness_out_of_bounds_raises():
    task = make_task("synthetic", fitness_bounds=(-0.1, 0.0))
    g = np.ones((1, 10))
    with pytest.raises(FitnessOutOfBounds, match="widen"):
        evaluate_batch(g, task, [0])


def test_task_validation():
    with pytest.raises(ConfigError):
        make_task("pointmass-omni", noise_scale=-1.0)
    with pytest.raises(ConfigError):
        make_task("pointmass-omni", episode_length=0)
    with pytest.raises(ConfigError):
        evaluate_batch(np.zeros((2, 5)), OMNI, [0, 1])
    assert make_task("synthetic", fitness_bounds=(-5, 1)).fitness_bounds == FitnessBounds(-5.0, 1.0)
