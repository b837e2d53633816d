"""Compare the numba and numpy backends of the filter-search kernels.

Run with ``python benchmarks/bench_kernels.py``. Numba compile time is paid
once by a warm-up call and excluded from the timings. The numpy path is
much slower, so it gets fewer restarts; per-restart times are reported.
"""
import argparse
import time

import numpy as np

from singlecopy import kernels
from singlecopy.optimize import Budget, restart_points
from singlecopy.states import eq10_state, random_density


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def bench_objective(rho, d, repeats):
    rng = np.random.default_rng(0)
    n = 2000
    As = rng.standard_normal((n, d, d)) + 1j * rng.standard_normal((n, d, d))
    Bs = rng.standard_normal((n, d, d)) + 1j * rng.standard_normal((n, d, d))

    def single(backend):
        return lambda: [kernels.filtered_fraction(a, b, rho, d, d, d, backend=backend)
                        for a, b in zip(As, Bs)]

    rows = []
    for backend in ("numba", "numpy"):
        single(backend)()  # warm-up
        t, vals = best_of(single(backend), repeats)
        rows.append((f"objective x{n} (d={d})", backend, t / n * 1e6, "us/call", vals[0]))
    return rows


def bench_search(rho, d, restarts, max_iters, repeats):
    starts = restart_points(d, d, kernels.MODE_TWO_WAY, Budget(restarts=restarts))
    rows = []
    for backend, r in (("numba", restarts), ("numpy", max(1, restarts // 8))):
        def run():
            return kernels.maximize_filters(starts[:r], rho, d, d, d, kernels.MODE_TWO_WAY,
                                            max_iters=max_iters, backend=backend)
        kernels.maximize_filters(starts[:1], rho, d, d, d, kernels.MODE_TWO_WAY,
                                 max_iters=10, backend=backend)  # warm-up
        t, (_, fs, _, _) = best_of(run, repeats)
        rows.append((f"search {r} restarts (d={d})", backend, t / r * 1e3, "ms/restart",
                     float(fs.max())))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--restarts", type=int, default=16)
    ap.add_argument("--max-iters", type=int, default=4000)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    rows = []
    for d, rho in ((2, eq10_state(0.5, 2).mat), (3, random_density(3, 3, 9, 0).mat)):
        rows += bench_objective(rho, d, args.repeats)
        rows += bench_search(rho, d, args.restarts, args.max_iters, args.repeats)

    print(f"{'case':32s} {'backend':8s} {'time':>12s}  {'unit':10s} result")
    for case, backend, t, unit, val in rows:
        print(f"{case:32s} {backend:8s} {t:12.3f}  {unit:10s} {val:.10f}")
    for i in range(0, len(rows), 2):
        print(f"speedup {rows[i][0]}: {rows[i + 1][2] / rows[i][2]:.1f}x")


if __name__ == "__main__":
    main()
