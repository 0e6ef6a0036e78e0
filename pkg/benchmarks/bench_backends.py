"""Time the compiled and pure-Python kernels side by side.

    python benchmarks/bench_backends.py [--repeat 3] [--json out.json]
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from kernelfin._backend import available_backends


def _best_time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    for n in (50, 200, 500):
        C = np.ascontiguousarray(rng.random((n, n)))
        yield f"lap_dense n={n}", lambda m, C=C: m.lap_dense(C)
    alpha, beta = np.array([0.1]), np.array([0.85])
    lag = np.array([1.0])
    for T in (1_000, 10_000, 100_000):
        x = np.ascontiguousarray(rng.standard_normal(T))
        yield f"garch_filter T={T}", lambda m, x=x: m.garch_filter(x, 0.05, alpha, beta, lag, lag)
        yield f"garch_unfilter T={T}", lambda m, x=x: m.garch_unfilter(x, 0.0, 0.05, alpha, beta, lag, lag)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--json", help="also write results to this file")
    args = ap.parse_args(argv)
    backends = available_backends()
    names = sorted(backends)
    if "cython" not in backends:
        print("compiled extension not built; timing the Python fallback only")
    rows = []
    for label, fn in cases(np.random.default_rng(0)):
        times = {b: _best_time(lambda: fn(backends[b]), args.repeat) for b in names}
        rows.append({"case": label, **times})
    width = max(len(r["case"]) for r in rows)
    head = f"{'case':<{width}}  " + "  ".join(f"{b:>10}" for b in names)
    if "cython" in backends:
        head += "  speedup"
    print(head)
    for r in rows:
        line = f"{r['case']:<{width}}  " + "  ".join(f"{r[b] * 1e3:>8.2f}ms" for b in names)
        if "cython" in backends:
            line += f"  {r['python'] / r['cython']:>6.1f}x"
        print(line)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
