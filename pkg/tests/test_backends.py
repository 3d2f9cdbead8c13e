import os
import subprocess
import sys

import numpy as np
import pytest

from qdbench import backend
from qdbench.core import derive_seeds, gaussian_stream
from qdbench.tasks import _omni_batch, _uni_batch, make_task, policy_spec

compiled_only = pytest.mark.skipif("compiled" not in backend.available(), reason="extension not built")
TOL = 1e-10


@pytest.fixture(scope="module")
def pair():
    return backend.get("compiled"), backend.get("python")


def _agree(a, b):
    if isinstance(a, tuple):
        assert len(a) == len(b)
        for x, y in zip(a, b):
            _agree(x, y)
    elif a is None:
        assert b is None
    else:
        a, b = np.asarray(a), np.asarray(b)
        assert a.shape == b.shape
        assert np.max(np.abs(a.astype(float) - b.astype(float)), initial=0.0) < TOL


@compiled_only
@pytest.mark.parametrize("preset, batch", [("pointmass-omni", _omni_batch), ("surrogate-uni", _uni_batch),
                                           ("surrogate-uni6", _uni_batch)])
@pytest.mark.parametrize("noise", [0.0, 0.2])
@pytest.mark.parametrize("record", [False, True])
def test_rollouts_agree(pair, preset, batch, noise, record):
    task = make_task(preset, noise_scale=noise)
    g = np.random.default_rng(0).uniform(-2, 2, size=(40, task.genotype_dim))
    seeds = derive_seeds(9, index=np.arange(40))
    c = batch(g, task, seeds, record=record, kern=pair[0])
    p = batch(g, task, seeds, record=record, kern=pair[1])
    _agree(c, p)
    # binary contact data must match exactly
    if record and task.kind == "uni":
        assert np.array_equal(c[2][3], p[2][3])


@compiled_only
def test_mlp_and_stream_agree(pair):
    rng = np.random.default_rng(3)
    sizes = np.array([5, 7, 3, 2], dtype=np.int64)
    n_params = 5 * 7 + 7 + 7 * 3 + 3 + 3 * 2 + 2
    params = rng.normal(size=(25, n_params))
    obs = rng.normal(size=(25, 5))
    _agree(pair[0].mlp_forward(params, sizes, obs), pair[1].mlp_forward(params, sizes, obs))
    seeds = derive_seeds(1, index=np.arange(30))
    _agree(pair[0].gaussian_stream(seeds, 11), gaussian_stream(seeds, 11))


@compiled_only
def test_nearest_centroid_identical(pair):
    rng = np.random.default_rng(4)
    c = rng.uniform(size=(300, 3))
    pts = np.vstack([rng.uniform(size=(1000, 3)), c[:20]])
    assert np.array_equal(pair[0].nearest_centroid(pts, c), pair[1].nearest_centroid(pts, c))
    ties = np.array([[0.0, 0.0], [1.0, 1.0]])
    assert pair[0].nearest_centroid(np.array([[0.5, 0.5]]), ties)[0] == 0
    assert pair[1].nearest_centroid(np.array([[0.5, 0.5]]), ties)[0] == 0


def test_env_var_forces_fallback():
    env = dict(os.environ, QDBENCH_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "from qdbench import backend; print(backend.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_backend_lookup():
    assert backend.get("python") is not None
    with pytest.raises(ValueError):
        backend.get("gpu")
    assert backend.BACKEND in backend.available()


def test_param_count_matches_policy():
    task = make_task("pointmass-omni")
    assert policy_spec(task).param_count == task.genotype_dim
