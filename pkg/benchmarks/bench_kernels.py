"""Time one simulated epidemic per backend for each built-in scenario.

    python3 benchmarks/bench_kernels.py [--repeats 20]

The first numba call includes JIT compilation and is reported separately.
Results go to stdout as one JSON object per line.
"""

from __future__ import annotations

import argparse
import json
import statistics
import time

import numpy as np

from dspsa_epi._accel import HAVE_NUMBA
from dspsa_epi.scenarios import default_scenario


def bench(mode: str, backend: str, repeats: int) -> dict:
    sc = default_scenario(mode)
    oracle = sc.oracle(backend)
    theta = np.array(sc.optimizer.theta0, dtype=float)
    t0 = time.perf_counter()
    oracle.evaluate(theta, 0)
    first = time.perf_counter() - t0
    times = []
    losses = []
    for seed in range(1, repeats + 1):
        t0 = time.perf_counter()
        losses.append(oracle.evaluate(theta, seed))
        times.append(time.perf_counter() - t0)
    return {
        "mode": mode,
        "backend": backend,
        "repeats": repeats,
        "first_call_s": round(first, 4),
        "median_ms": round(1e3 * statistics.median(times), 3),
        "min_ms": round(1e3 * min(times), 3),
        "mean_loss": round(float(np.mean(losses)), 4),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    rows = []
    for mode in ("h1n1", "covid"):
        for b in backends:
            row = bench(mode, b, args.repeats)
            rows.append(row)
            print(json.dumps(row))
    if HAVE_NUMBA:
        for mode in ("h1n1", "covid"):
            slow, fast = (next(r for r in rows if r["mode"] == mode and r["backend"] == b) for b in ("numpy", "numba"))
            print(json.dumps({"mode": mode, "speedup": round(slow["median_ms"] / fast["median_ms"], 1)}))


if __name__ == "__main__":
    main()
