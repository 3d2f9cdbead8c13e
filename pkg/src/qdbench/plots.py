"""Deterministic SVG figures: metric curves, archive profiles, archive heatmaps.

SVG is emitted by hand from a tiny scene model. Coordinates are formatted
with a fixed number of decimals, so identical inputs give identical bytes.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import harness
from .core import ConfigError, FitnessBounds
from .metrics import read_profile_csv

LOW_COLOR = harness.DEFAULTS["plots"]["low_color"]
HIGH_COLOR = harness.DEFAULTS["plots"]["high_color"]
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")

CURVE_METRICS = ("coverage", "qd_score", "max_fitness") + harness.CORRECTED_SUMMARY_METRICS
X_AXES = ("evaluations", "wall_time")

_HEX = re.compile(r"^#[0-9a-fA-F]{6}$")


def _esc(text: str) -> str:
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;").replace('"', "&quot;")


def _n(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


# ---------------------------------------------------------------- scene model


@dataclass
class Scene:
    width: int = 720
    height: int = 480
    items: list[str] = field(default_factory=list)

    def rect(self, x, y, w, h, fill, stroke=None, opacity=None, cls=None):
        extra = f' class="{cls}"' if cls else ""
        if stroke:
            extra += f' stroke="{stroke}"'
        if opacity is not None:
            extra += f' fill-opacity="{opacity}"'
        self.items.append(f'<rect x="{_n(x)}" y="{_n(y)}" width="{_n(w)}" height="{_n(h)}" fill="{fill}"{extra}/>')

    def line(self, x1, y1, x2, y2, stroke="#222222", width=1.0):
        self.items.append(
            f'<line x1="{_n(x1)}" y1="{_n(y1)}" x2="{_n(x2)}" y2="{_n(y2)}" stroke="{stroke}" stroke-width="{width}"/>'
        )

    def polyline(self, pts, stroke, width=2.0):
        coords = " ".join(f"{_n(x)},{_n(y)}" for x, y in pts)
        self.items.append(f'<polyline points="{coords}" fill="none" stroke="{stroke}" stroke-width="{width}"/>')

    def polygon(self, pts, fill, opacity=0.2):
        coords = " ".join(f"{_n(x)},{_n(y)}" for x, y in pts)
        self.items.append(f'<polygon points="{coords}" fill="{fill}" fill-opacity="{opacity}" stroke="none"/>')

    def step_path(self, pts, stroke, width=2.0):
        """Right-continuous step curve through ``pts`` (horizontal, then vertical)."""
        if not pts:
            return
        d = [f"M{_n(pts[0][0])},{_n(pts[0][1])}"]
        for (x0, y0), (x1, y1) in zip(pts[:-1], pts[1:]):
            d.append(f"H{_n(x1)}")
            if y1 != y0:
                d.append(f"V{_n(y1)}")
        self.items.append(f'<path d="{"".join(d)}" fill="none" stroke="{stroke}" stroke-width="{width}"/>')

    def text(self, x, y, s, size=12, anchor="middle", rotate=False):
        tr = f' transform="rotate(-90 {_n(x)} {_n(y)})"' if rotate else ""
        self.items.append(
            f'<text x="{_n(x)}" y="{_n(y)}" font-family="sans-serif" font-size="{size}" '
            f'text-anchor="{anchor}"{tr}>{_esc(s)}</text>'
        )

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}" height="{self.height}" '
                f'viewBox="0 0 {self.width} {self.height}">')
        return "\n".join([head, f'<rect width="{self.width}" height="{self.height}" fill="#ffffff"/>',
                          *self.items, "</svg>"]) + "\n"

    def save(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.render(), encoding="utf-8")
        return path


def nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return []
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    k = 0
    while first + k * step <= hi + 1e-9 * step:
        ticks.append(round(first + k * step, 12))
        k += 1
    return ticks


def _fmt_tick(v: float) -> str:
    if v == 0:
        return "0"
    if abs(v) >= 1e5 or abs(v) < 1e-3:
        return f"{v:.2g}"
    return f"{v:.6g}"


class Axes:
    """Maps data coordinates into a plot rectangle and draws the frame."""

    def __init__(self, scene: Scene, xlim, ylim, left=80, right=170, top=40, bottom=60):
        self.scene = scene
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.left, self.top = left, top
        self.w = scene.width - left - right
        self.h = scene.height - top - bottom

    def px(self, x: float) -> float:
        return self.left + (x - self.x0) / (self.x1 - self.x0) * self.w

    def py(self, y: float) -> float:
        return self.top + self.h - (y - self.y0) / (self.y1 - self.y0) * self.h

    def frame(self, xlabel: str, ylabel: str, title: str = ""):
        s = self.scene
        bottom = self.top + self.h
        for t in nice_ticks(self.x0, self.x1):
            x = self.px(t)
            s.line(x, bottom, x, bottom + 5)
            s.text(x, bottom + 18, _fmt_tick(t), size=10)
        for t in nice_ticks(self.y0, self.y1):
            y = self.py(t)
            s.line(self.left - 5, y, self.left, y)
            s.text(self.left - 8, y + 4, _fmt_tick(t), size=10, anchor="end")
        s.line(self.left, self.top, self.left, bottom)
        s.line(self.left, bottom, self.left + self.w, bottom)
        s.text(self.left + self.w / 2, s.height - 15, xlabel, size=13)
        s.text(18, self.top + self.h / 2, ylabel, size=13, rotate=True)
        if title:
            s.text(self.left + self.w / 2, 22, title, size=15)

    def legend(self, entries: Sequence[tuple[str, str]]):
        x = self.left + self.w + 15
        for i, (label, color) in enumerate(entries):
            y = self.top + 10 + 20 * i
            self.scene.line(x, y, x + 20, y, stroke=color, width=2.0)
            self.scene.text(x + 26, y + 4, label, size=11, anchor="start")


# ---------------------------------------------------------------- metric curves


def _summary_tables(source):
    """Return (summary rows, corrected rows) from an experiment dir or a summary.csv."""
    p = Path(source)
    if p.is_file():
        rows = harness.read_summary(p)
        corr = p.with_name("corrected_summary.csv")
        return rows, (harness.read_summary(corr) if corr.exists() else [])
    if (p / "summary.csv").exists():
        corr = p / "corrected_summary.csv"
        return harness.read_summary(p / "summary.csv"), (harness.read_summary(corr) if corr.exists() else [])
    out = harness.summarise(p)
    return out["summary"], out["corrected"]


def plot_metric_curves(source, metric: str, x: str = "evaluations", out=None, task: str | None = None) -> str:
    """Median curve plus interquartile band per algorithm.

    ``source`` is an experiment directory (its ``summary.csv`` is used when
    present, otherwise the tree is summarised in memory) or a ``summary.csv``.
    Returns the SVG text and writes it to ``out`` when given.
    """
    if metric not in CURVE_METRICS:
        raise ValueError(f"unknown metric {metric!r}; valid metrics: {', '.join(CURVE_METRICS)}")
    if x not in X_AXES:
        raise ValueError(f"unknown x axis {x!r}; choose from {', '.join(X_AXES)}")
    summary, corrected = _summary_tables(source)
    svg = _render_curves(summary, corrected, metric, x, task, str(source))
    if out is not None:
        _save(svg, Path(out))
    return svg


def _render_curves(summary, corrected, metric, x, task, source) -> str:
    is_corr = metric in harness.CORRECTED_SUMMARY_METRICS
    rows = corrected if is_corr else summary
    key = "checkpoint_evaluations" if is_corr else "evaluations"
    if task is not None:
        rows = [r for r in rows if r["task"] == task]
        summary = [r for r in summary if r["task"] == task]
    if not rows:
        raise ValueError(f"no data for metric {metric!r} in {source}")

    # wall-time for corrected checkpoints comes from the matching summary row
    wall = {(r["algorithm"], r["task"], int(r["evaluations"])): r["wall_time_s_median"] for r in summary}
    series: dict[str, list[tuple[float, float, float, float]]] = {}
    for r in rows:
        ev = int(r[key])
        if x == "evaluations":
            xv = float(ev)
        else:
            xv = wall.get((r["algorithm"], r["task"], ev), float("nan"))
        med, q1, q3 = r[f"{metric}_median"], r[f"{metric}_q1"], r[f"{metric}_q3"]
        if all(math.isfinite(v) for v in (xv, med, q1, q3)):
            series.setdefault(r["algorithm"], []).append((xv, med, q1, q3))
    if not series:
        raise ValueError(f"metric {metric!r} has no finite values in {source}")
    for pts in series.values():
        pts.sort()

    allx = [p[0] for pts in series.values() for p in pts]
    ally = [v for pts in series.values() for p in pts for v in p[1:]]
    xlim = (min(0.0, min(allx)), max(allx))
    pad = 0.05 * (max(ally) - min(ally)) or 1.0
    ylim = (min(ally) - pad, max(ally) + pad)

    scene = Scene()
    ax = Axes(scene, xlim, ylim)
    legend = []
    for i, name in enumerate(sorted(series)):
        color = PALETTE[i % len(PALETTE)]
        pts = series[name]
        if any(q3 > q1 for _, _, q1, q3 in pts):
            upper = [(ax.px(p[0]), ax.py(p[3])) for p in pts]
            lower = [(ax.px(p[0]), ax.py(p[2])) for p in reversed(pts)]
            scene.polygon(upper + lower, color)
        scene.polyline([(ax.px(p[0]), ax.py(p[1])) for p in pts], color)
        legend.append((name, color))
    ax.frame("evaluations" if x == "evaluations" else "wall time (s)", metric,
             f"{metric} (median, IQR)")
    ax.legend(legend)
    return scene.render()


# ---------------------------------------------------------------- archive profile


def plot_archive_profile(profiles: Sequence, out=None, labels: Sequence[str] | None = None) -> str:
    """Step curves of several profile CSVs (``fitness_threshold,count``) on shared axes.

    All profiles must be sampled over the same fitness bounds (same first and
    last threshold).
    """
    if not profiles:
        raise ValueError("need at least one profile")
    labels = list(labels) if labels is not None else [Path(p).parent.name or Path(p).stem for p in profiles]
    if len(labels) != len(profiles):
        raise ValueError("one label per profile required")
    data = []
    for p in profiles:
        t, c = read_profile_csv(p)
        if len(t) == 0:
            raise ValueError(f"empty profile file {p}")
        data.append((t, c))
    lo, hi = data[0][0][0], data[0][0][-1]
    for (t, _), p in zip(data, profiles):
        if t[0] != lo or t[-1] != hi:
            raise ValueError(f"profile {p} spans [{t[0]}, {t[-1]}], expected [{lo}, {hi}]: fitness bounds differ")
    ymax = max(int(c.max()) for _, c in data)

    scene = Scene()
    ax = Axes(scene, (lo, hi), (0.0, max(ymax, 1) * 1.05))
    legend = []
    for i, ((t, c), label) in enumerate(zip(data, labels)):
        color = PALETTE[i % len(PALETTE)]
        scene.step_path([(ax.px(a), ax.py(b)) for a, b in zip(t.tolist(), c.tolist())], color)
        legend.append((label, color))
    ax.frame("fitness threshold", "individuals with fitness >= threshold", "archive profile")
    ax.legend(legend)
    svg = scene.render()
    if out is not None:
        scene.save(out)
    return svg


# ---------------------------------------------------------------- heatmap


def parse_hex(color: str) -> tuple[int, int, int]:
    if not isinstance(color, str) or not _HEX.match(color):
        raise ConfigError(f"colour must look like #rrggbb, got {color!r}")
    return int(color[1:3], 16), int(color[3:5], 16), int(color[5:7], 16)


def interpolate(low: str, high: str, t: float) -> str:
    """Linear blend between two hex colours, ``t`` clipped to [0, 1]."""
    t = min(max(float(t), 0.0), 1.0)
    a, b = parse_hex(low), parse_hex(high)
    return "#" + "".join(f"{round(x + (y - x) * t):02x}" for x, y in zip(a, b))


def plot_archive_heatmap(dump, out=None, low_color: str = LOW_COLOR, high_color: str = HIGH_COLOR,
                         bounds: FitnessBounds | None = None) -> str:
    """One rectangle per occupied cell of a 2-D grid archive dump.

    Colour follows fitness normalised over ``bounds`` (default: the task's
    fitness bounds stored in the dump). Empty cells are left blank.
    """
    parse_hex(low_color)
    parse_hex(high_color)
    data = dump if isinstance(dump, dict) else json.loads(Path(dump).read_text())
    container = data["container"]
    if container["kind"] != "grid":
        raise ValueError("heatmap is defined for grid containers only, got a CVT archive")
    sub = container["subdivisions"]
    if len(sub) != 2:
        raise ValueError(f"heatmap needs a 2-D descriptor space, got {len(sub)} dimensions")
    if bounds is None:
        task = data.get("task") or {}
        if "fitness_bounds" not in task:
            raise ValueError("dump carries no task fitness bounds; pass bounds explicitly")
        bounds = FitnessBounds(*task["fitness_bounds"])
    (x_lo, x_hi), (y_lo, y_hi) = container["bd_bounds"]

    scene = Scene(width=620, height=560)
    ax = Axes(scene, (x_lo, x_hi), (y_lo, y_hi), left=70, right=90, top=40, bottom=60)
    cw = ax.w / sub[0]
    ch = ax.h / sub[1]
    cells = sorted(data["cells"], key=lambda r: r["cell"])
    for rec in cells:
        i, j = np.unravel_index(int(rec["cell"]), sub)
        t = (rec["fitness"] - bounds.f_min) / bounds.width
        scene.rect(ax.left + i * cw, ax.top + ax.h - (j + 1) * ch, cw, ch,
                   interpolate(low_color, high_color, t), cls="cell")
    ax.frame("descriptor 1", "descriptor 2", f"archive ({len(cells)} / {sub[0] * sub[1]} cells)")
    # colour bar
    bx = ax.left + ax.w + 25
    steps = 32
    for k in range(steps):
        y = ax.top + ax.h - (k + 1) * ax.h / steps
        scene.rect(bx, y, 16, ax.h / steps, interpolate(low_color, high_color, (k + 0.5) / steps))
    scene.text(bx + 8, ax.top - 6, _fmt_tick(bounds.f_max), size=10)
    scene.text(bx + 8, ax.top + ax.h + 14, _fmt_tick(bounds.f_min), size=10)
    svg = scene.render()
    if out is not None:
        scene.save(out)
    return svg


def plot_experiment(output_dir, low_color: str = LOW_COLOR, high_color: str = HIGH_COLOR,
                    rep: int = 0) -> list[Path]:
    """Render every figure for an experiment tree into ``<output_dir>/plots``.

    Curves for each metric against evaluations and wall time, the profiles
    of replication ``rep`` for all algorithms, and a heatmap per 2-D grid
    archive of that replication.
    """
    output_dir = Path(output_dir)
    plot_dir = output_dir / "plots"
    groups, _ = harness.complete_reps(output_dir)
    if not groups:
        raise FileNotFoundError(f"no completed replications under {output_dir}")
    written = []
    tables = harness.summarise(output_dir)
    has_corrected = bool(tables["corrected"])
    tasks = sorted({task for _, task in groups})
    for task in tasks:
        for metric in CURVE_METRICS:
            if metric in harness.CORRECTED_SUMMARY_METRICS and not has_corrected:
                continue
            for x in X_AXES:
                try:
                    svg = _render_curves(tables["summary"], tables["corrected"], metric, x, task, str(output_dir))
                except ValueError:
                    # e.g. a loss that is undefined in every replication
                    continue
                written.append(_save(svg, plot_dir / f"{metric}_{x}_{task}.svg"))
        reps = {alg: [p for p in paths if p.name == f"rep_{rep}"]
                for (alg, t), paths in sorted(groups.items()) if t == task}
        profiles = [(alg, p[0] / "profile.csv") for alg, p in reps.items() if p]
        if profiles:
            svg = plot_archive_profile([p for _, p in profiles], labels=[a for a, _ in profiles])
            written.append(_save(svg, plot_dir / f"profile_{task}_rep{rep}.svg"))
        for alg, p in reps.items():
            if not p:
                continue
            data = json.loads((p[0] / "archive.json").read_text())
            c = data["container"]
            if c["kind"] == "grid" and len(c["subdivisions"]) == 2:
                svg = plot_archive_heatmap(data, low_color=low_color, high_color=high_color)
                written.append(_save(svg, plot_dir / f"heatmap_{alg}_{task}_rep{rep}.svg"))
    return written


def _save(svg: str, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(svg, encoding="utf-8")
    return path
