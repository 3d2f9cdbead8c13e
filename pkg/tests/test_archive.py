import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qdbench.archive import (
    Archive,
    CvtSpec,
    GridSpec,
    InsertKind,
    build_centroids,
    coverage,
    cvt_cell_index,
    grid_cell_index,
    make_grid,
)
from qdbench.core import ConfigError, Individual, RngStream
from qdbench.tasks import TABLE_GRIDS

UNIT2 = ((0.0, 1.0), (0.0, 1.0))
G30 = GridSpec(UNIT2, (30, 30))


def ind(f, d, g=(0.0,), seed=0):
    return Individual(list(g), f, list(d), seed)


@pytest.mark.parametrize("d, cell", [((0, 0), 0), ((1, 1), 899), ((0.5, 0.5), 465)])
def test_grid_index_examples(d, cell):
    assert grid_cell_index(d, G30) == cell


def test_grid_index_clamps_outside():
    assert grid_cell_index((-3, 7), G30) == grid_cell_index((0, 1), G30)


@given(st.lists(st.floats(-1e3, 1e3), min_size=3, max_size=3))
def test_grid_index_total(d):
    spec = GridSpec(((-1, 1), (0, 2), (5, 6)), (3, 7, 4))
    assert 0 <= grid_cell_index(d, spec) < spec.capacity


def test_grid_index_batch_matches_single():
    pts = RngStream(1, 0).generator().uniform(0, 1, size=(100, 2))
    batch = grid_cell_index(pts, G30)
    assert list(batch) == [grid_cell_index(p, G30) for p in pts]


def test_capacities():
    assert GridSpec(UNIT2, TABLE_GRIDS["walker-uni"]).capacity == 900
    assert GridSpec(((0, 1),) * 4, TABLE_GRIDS["ant-uni"]).capacity == 625
    assert GridSpec(((0, 1),) * 6, TABLE_GRIDS["hexapod-uni"]).capacity == 15625
    assert GridSpec(UNIT2, TABLE_GRIDS["ant-omni"]).capacity == 10000


def test_grid_spec_validation():
    with pytest.raises(ConfigError):
        GridSpec(UNIT2, (0, 3))
    with pytest.raises(ConfigError):
        GridSpec(UNIT2, (3,))


def test_cvt_examples():
    c = np.array([[0.0, 0.0], [1.0, 1.0]])
    assert cvt_cell_index((0.1, 0.1), c) == 0
    assert cvt_cell_index((0.5, 0.5), c) == 0  # tie -> lowest index


def test_cvt_exact_centroid():
    c = build_centroids(CvtSpec(UNIT2, 16, kmeans_samples=400))
    assert cvt_cell_index(c[7], c) == 7


def test_cvt_tie_breaking_prefers_lowest_index():
    c = np.array([[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]])
    assert cvt_cell_index((0.0, 0.0), c) == 0
    assert cvt_cell_index((-0.5, -0.5), c) == 2


def test_cvt_matches_brute_force():
    c = build_centroids(CvtSpec(UNIT2, 50, kmeans_samples=1000))
    pts = RngStream(3, 0).generator().uniform(0, 1, size=(500, 2))
    d2 = ((pts[:, None, :] - c[None, :, :]) ** 2).sum(-1)
    assert np.array_equal(cvt_cell_index(pts, c), np.argmin(d2, axis=1))


def test_kmeans_single_centroid_is_mean():
    spec = CvtSpec(UNIT2, 1, kmeans_samples=300, centroid_seed=4)
    c = build_centroids(spec)
    samples = RngStream(4, 0).generator().uniform([0, 0], [1, 1], size=(300, 2))
    assert np.allclose(c[0], samples.mean(axis=0), atol=1e-12)
    assert np.all((c >= 0) & (c <= 1))


def test_kmeans_all_samples_are_centroids():
    spec = CvtSpec(UNIT2, 20, kmeans_samples=20, centroid_seed=2)
    samples = RngStream(2, 0).generator().uniform([0, 0], [1, 1], size=(20, 2))
    c = build_centroids(spec)
    assert sorted(map(tuple, c)) == sorted(map(tuple, samples))


def _lloyd_reference(samples, init, iters):
    c = init.copy()
    for _ in range(iters):
        assign = np.argmin(((samples[:, None] - c[None]) ** 2).sum(-1), axis=1)
        new = np.array([samples[assign == k].mean(axis=0) for k in range(len(c))])
        if np.max(np.linalg.norm(new - c, axis=1)) < 1e-9:
            return new
        c = new
    return c


def test_kmeans_four_centroids_golden():
    spec = CvtSpec(UNIT2, 4, kmeans_samples=200, centroid_seed=0)
    c = build_centroids(spec)
    golden = [
        [0.8012907279144469, 0.22107301839259144],
        [0.7684838712785047, 0.7465579985926383],
        [0.3284285043604824, 0.26826430093913295],
        [0.24629567960600068, 0.7829830500846935],
    ]
    assert np.allclose(c, golden, atol=1e-12)
    assert np.all((c > 0) & (c < 1))
    assert len({tuple(x) for x in c}) == 4
    # independent brute-force Lloyd from the same initialisation
    rng = RngStream(0, 0).generator()
    samples = rng.uniform([0, 0], [1, 1], size=(200, 2))
    init = samples[np.sort(rng.choice(200, size=4, replace=False))]
    assert np.allclose(_lloyd_reference(samples, init, 100), c, atol=1e-10)


def test_kmeans_deterministic_and_exact_count():
    spec = CvtSpec(UNIT2, 64, kmeans_samples=640, centroid_seed=9)
    a = build_centroids(spec)
    b = build_centroids(CvtSpec(UNIT2, 64, kmeans_samples=640, centroid_seed=9))
    assert np.array_equal(a, b)
    assert Archive(spec).capacity == 64 and a.shape == (64, 2)


def test_kmeans_empty_clusters_reseeded():
    # many centroids on few distinct points: duplicates start empty
    spec = CvtSpec(((0, 1),), 30, kmeans_samples=60, kmeans_max_iters=50)
    c = build_centroids(spec)
    assert c.shape == (30, 1)
    assert len(np.unique(c)) == 30


def test_cvt_spec_validation():
    with pytest.raises(ConfigError):
        CvtSpec(UNIT2, 100, kmeans_samples=10)
    assert CvtSpec(UNIT2, 10).kmeans_samples == 500


# ---------------------------------------------------------------- insertion


def test_insert_new_replace_reject():
    a = make_grid(UNIT2, (30, 30))
    assert coverage(a) == 0
    out = a.try_insert(ind(5.0, (0.5, 0.5)))
    assert out.kind is InsertKind.INSERTED_NEW and out.cell == 465 and coverage(a) == 1
    assert a.try_insert(ind(5.0, (0.5, 0.5), seed=9)).kind is InsertKind.REJECTED
    assert a[465].eval_seed == 0
    assert a.try_insert(ind(5.1, (0.5, 0.5))).kind is InsertKind.REPLACED
    assert coverage(a) == 1 and a[465].fitness == 5.1


def test_coverage_counts_distinct_cells():
    a = make_grid(UNIT2, (30, 30))
    for d in [(0, 0), (0.5, 0.5), (1, 1)]:
        assert a.try_insert(ind(1.0, d)).kind is InsertKind.INSERTED_NEW
    assert coverage(a) == 3


@st.composite
def insert_sequences(draw):
    n = draw(st.integers(1, 60))
    return [
        (draw(st.floats(-10, 10)), draw(st.floats(0, 1)), draw(st.floats(0, 1)))
        for _ in range(n)
    ]


@given(insert_sequences())
def test_insert_monotone_and_consistent(seq):
    a = make_grid(UNIT2, (5, 5))
    prev_cov = 0
    prev = {}
    for f, x, y in seq:
        a.try_insert(ind(f, (x, y)))
        assert len(a) >= prev_cov
        prev_cov = len(a)
        for cell, i in a.items():
            assert i.fitness >= prev.get(cell, -np.inf)
            assert a.cell_index(i.descriptor) == cell
        prev = {c: i.fitness for c, i in a.items()}
    assert len(a) <= a.capacity


@given(st.lists(st.floats(-100, 100), min_size=1, max_size=20), st.randoms())
def test_insert_order_keeps_max(fits, rnd):
    order = list(range(len(fits)))
    rnd.shuffle(order)
    a = make_grid(UNIT2, (3, 3))
    for i in order:
        a.try_insert(ind(fits[i], (0.2, 0.2), g=(float(i),)))
    assert a[0].fitness == max(fits)


def test_add_batch_matches_sequential():
    rng = RngStream(0, 0).generator()
    d = rng.uniform(0, 1, size=(300, 2))
    f = rng.normal(size=300)
    g = rng.normal(size=(300, 3))
    seeds = np.arange(300, dtype=np.uint64)
    a = make_grid(UNIT2, (6, 6))
    b = make_grid(UNIT2, (6, 6))
    out = a.add_batch(g, f, d, seeds)
    for i in range(300):
        assert b.try_insert(Individual(g[i], f[i], d[i], i)).kind is out[i].kind
    assert a.dumps() == b.dumps()


@pytest.mark.parametrize("spec", [G30, CvtSpec(UNIT2, 25, kmeans_samples=500)])
def test_dump_round_trip(tmp_path, spec):
    a = Archive(spec, task={"name": "x"})
    rng = RngStream(5, 0).generator()
    for i in range(40):
        a.try_insert(Individual(rng.normal(size=4), float(rng.normal()), rng.uniform(0, 1, 2), i))
    a.dump(tmp_path / "a.json")
    b = Archive.load(tmp_path / "a.json")
    assert b.dumps() == a.dumps()
    assert b.items() == a.items()
    data = json.loads(a.dumps())
    assert data["capacity"] == spec.capacity and data["container"]["kind"] in ("grid", "cvt")


def test_load_rejects_bad_schema():
    a = make_grid(UNIT2, (2, 2))
    data = a.to_dict()
    data["schema_version"] = 99
    with pytest.raises(ConfigError):
        Archive.from_dict(data)
