import csv
import hashlib
import re

import numpy as np
import pytest

from qdbench import harness, plots
from qdbench.archive import Archive, CvtSpec, make_grid
from qdbench.core import FitnessBounds, Individual
from qdbench.metrics import METRICS_HEADER, archive_profile, qd_score, write_profile_csv


def _tree(root, algos, reps, value=lambda a, r, e: e * (r + 1)):
    for algo in algos:
        for r in range(reps):
            d = harness.rep_dir(root, algo, "t", r)
            d.mkdir(parents=True)
            with open(d / "metrics.csv", "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(METRICS_HEADER)
                for e in (100, 200, 300):
                    v = float(value(algo, r, e))
                    w.writerow([e, e / 1000, int(v), v, v])
            (d / harness.DONE).write_text("300\n")
    return root


def _digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_curves_three_series_and_deterministic(tmp_path):
    root = _tree(tmp_path / "exp", ["map-elites", "cvt-map-elites", "random-search"], 3)
    before = {p: _digest(p) for p in root.rglob("*.csv")}
    svg = plots.plot_metric_curves(root, "qd_score", "evaluations", out=tmp_path / "a.svg")
    plots.plot_metric_curves(root, "qd_score", "evaluations", out=tmp_path / "b.svg")
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
    assert svg.count("<polyline") == 3 and svg.count("<polygon") == 3
    for name in ("map-elites", "cvt-map-elites", "random-search"):
        assert f">{name}</text>" in svg
    # plotting is a pure read
    assert before == {p: _digest(p) for p in root.rglob("*.csv")}
    assert not (root / "summary.csv").exists()


def test_curves_single_replication_has_no_band(tmp_path):
    root = _tree(tmp_path / "exp", ["map-elites"], 1)
    svg = plots.plot_metric_curves(root, "coverage", "wall_time")
    assert svg.count("<polyline") == 1 and "<polygon" not in svg
    assert "wall time (s)" in svg


def test_curves_unknown_metric(tmp_path):
    root = _tree(tmp_path / "exp", ["map-elites"], 1)
    with pytest.raises(ValueError, match="valid metrics: coverage, qd_score"):
        plots.plot_metric_curves(root, "fitness", "evaluations")
    with pytest.raises(ValueError):
        plots.plot_metric_curves(root, "coverage", "time")


def _profile_csv(path, fits, b):
    write_profile_csv(archive_profile(fits), b, path)
    return path


def test_profile_plot_non_injective_pair(tmp_path):
    b = FitnessBounds(0.0, 4.0)
    f1, f2 = [2.0, 2.0], [1.0, 3.0]
    assert qd_score(f1, b) == qd_score(f2, b)
    p1 = _profile_csv(tmp_path / "a.csv", f1, b)
    p2 = _profile_csv(tmp_path / "b.csv", f2, b)
    svg = plots.plot_archive_profile([p1, p2], labels=["A1", "A2"])
    paths = re.findall(r'<path d="([^"]+)"', svg)
    assert len(paths) == 2 and paths[0] != paths[1]
    assert ">A1</text>" in svg and ">A2</text>" in svg


def test_profile_plot_degenerate_cases(tmp_path):
    b = FitnessBounds(0.0, 4.0)
    empty = plots.plot_archive_profile([_profile_csv(tmp_path / "e.csv", [], b)])
    d, = re.findall(r'<path d="([^"]+)"', empty)
    assert "V" not in d  # flat line at zero
    single = plots.plot_archive_profile([_profile_csv(tmp_path / "s.csv", [2.0, 2.0, 2.0], b)])
    d, = re.findall(r'<path d="([^"]+)"', single)
    assert d.count("V") == 1  # one drop from coverage to 0


def test_profile_plot_mismatched_bounds(tmp_path):
    p1 = _profile_csv(tmp_path / "a.csv", [1.0], FitnessBounds(0.0, 4.0))
    p2 = _profile_csv(tmp_path / "b.csv", [1.0], FitnessBounds(0.0, 5.0))
    with pytest.raises(ValueError, match="bounds"):
        plots.plot_archive_profile([p1, p2])


TASK = {"fitness_bounds": [0.0, 1.0]}


def test_heatmap_full_grid(tmp_path):
    a = make_grid(((0, 1), (0, 1)), (100, 100), task=TASK)
    for i in range(100):
        for j in range(100):
            a.try_insert(Individual([0.0], (i + j) / 198, [(i + 0.5) / 100, (j + 0.5) / 100], 0))
    a.dump(tmp_path / "a.json")
    svg = plots.plot_archive_heatmap(tmp_path / "a.json", out=tmp_path / "h.svg")
    assert svg.count('class="cell"') == 10_000
    assert plots.plot_archive_heatmap(tmp_path / "a.json") == (tmp_path / "h.svg").read_text()


def test_heatmap_empty_and_single(tmp_path):
    a = make_grid(((0, 1), (0, 1)), (10, 10), task=TASK)
    svg = plots.plot_archive_heatmap(a.to_dict())
    assert 'class="cell"' not in svg and "<line" in svg
    a.try_insert(Individual([0.0], 1.0, [0.05, 0.05], 0))
    svg = plots.plot_archive_heatmap(a.to_dict(), low_color="#000000", high_color="#ff8000")
    cells = re.findall(r'<rect [^>]*class="cell"[^>]*>', svg)
    assert len(cells) == 1 and 'fill="#ff8000"' in cells[0]


def test_heatmap_rejects_cvt_and_non_2d():
    cvt = Archive(CvtSpec(((0, 1), (0, 1)), 10, kmeans_samples=100), task=TASK)
    with pytest.raises(ValueError, match="grid"):
        plots.plot_archive_heatmap(cvt.to_dict())
    with pytest.raises(ValueError, match="2-D"):
        plots.plot_archive_heatmap(make_grid(((0, 1),) * 3, (3, 3, 3), task=TASK).to_dict())


def test_colour_interpolation():
    assert plots.interpolate("#000000", "#ffffff", 0.0) == "#000000"
    assert plots.interpolate("#000000", "#ffffff", 1.0) == "#ffffff"
    assert plots.interpolate("#000000", "#ff0080", 0.5) == "#800040"
    assert plots.interpolate("#000000", "#ffffff", 7.0) == "#ffffff"
    with pytest.raises(ValueError):
        plots.parse_hex("blue")


def test_nice_ticks():
    assert plots.nice_ticks(0, 10) == [0, 2, 4, 6, 8, 10]
    assert plots.nice_ticks(80, 100) == [80, 85, 90, 95, 100]
    ticks = plots.nice_ticks(-5, 5)
    assert ticks[0] >= -5 and ticks[-1] <= 5 and 0 in ticks
    assert np.all(np.diff(plots.nice_ticks(0.0, 0.37)) > 0)
