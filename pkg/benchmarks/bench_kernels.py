"""Compare the compiled and pure-Python kernel backends.

    python benchmarks/bench_kernels.py [--episodes 512] [--repeat 3]

Prints microseconds per episode (or per query) for each kernel and the
largest absolute difference between the two backends' outputs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from qdbench import backend
from qdbench.core import derive_seeds
from qdbench.tasks import _omni_batch, _uni_batch, make_task, policy_spec


def _time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--episodes", type=int, default=512)
    ap.add_argument("--queries", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()

    names = backend.available()
    if "compiled" not in names:
        print("compiled extension not built; only the python backend is available")
    rng = np.random.default_rng(0)
    seeds = derive_seeds(0, index=np.arange(args.episodes))
    cases = []
    for preset, batch in (("pointmass-omni", _omni_batch), ("surrogate-uni", _uni_batch)):
        task = make_task(preset)
        g = rng.uniform(-1, 1, size=(args.episodes, policy_spec(task).param_count))
        cases.append((f"rollout ({preset})", lambda k, b=batch, t=task, g=g: b(g, t, seeds, kern=k),
                      args.episodes, "episode"))
    points = rng.uniform(-5, 5, size=(args.queries, 2))
    centroids = rng.uniform(-5, 5, size=(10_000, 2))
    cases.append(("nearest_centroid (10k centroids)", lambda k: k.nearest_centroid(points, centroids),
                  args.queries, "query"))

    print(f"{'kernel':40s}" + "".join(f"{n:>14s}" for n in names) + f"{'speedup':>10s}{'max |diff|':>12s}")
    for label, call, count, unit in cases:
        times, outs = [], []
        for name in names:
            kern = backend.get(name)
            t, out = _time(lambda: call(kern), args.repeat)
            times.append(t / count * 1e6)
            outs.append(out[0] if isinstance(out, tuple) else out)
        row = f"{label:40s}" + "".join(f"{t:11.2f} us" for t in times)
        if len(names) == 2:
            diff = float(np.max(np.abs(np.asarray(outs[0], float) - np.asarray(outs[1], float))))
            row += f"{times[1] / times[0]:9.2f}x{diff:12.2e}"
        print(row + f"  (per {unit})")


if __name__ == "__main__":
    main()
