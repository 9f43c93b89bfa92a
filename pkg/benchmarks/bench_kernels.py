"""Compare the compiled distance kernels against the NumPy fallback.

Runs knn_neighbors and chamfer over a range of cloud sizes with both
backends and prints a timing table. The fallback is loaded directly from
the reference module, so no subprocess or reimport is needed.

Usage: python3 benchmarks/bench_kernels.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from smoothdiff import backend_name
from smoothdiff._kernels import _reference, chamfer, knn_neighbors

SIZES = (256, 512, 1024, 2048)
K = 30


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if backend_name() != "compiled":
        print("note: compiled backend not available; both columns use NumPy")
    active = {"knn": knn_neighbors, "chamfer": chamfer}
    fallback = {"knn": _reference.knn_neighbors, "chamfer": _reference.chamfer}

    rng = np.random.default_rng(0)
    print(f"{'kernel':<10} {'N':>6} {'numpy (ms)':>12} {'active (ms)':>12} {'speedup':>9}")
    for n in SIZES:
        pts = rng.standard_normal((n, 3))
        other = rng.standard_normal((n, 3))
        jobs = {
            "knn": (lambda f: f(pts, K)),
            "chamfer": (lambda f: f(pts, other)),
        }
        for name, run in jobs.items():
            # agreement first, then timing
            if name == "knn":
                assert np.array_equal(active[name](pts, K), fallback[name](pts, K))
            else:
                a, b = active[name](pts, other), fallback[name](pts, other)
                assert abs(a - b) <= 1e-12 * max(1.0, abs(b))
            t_ref = best_of(lambda: run(fallback[name]), args.repeats)
            t_act = best_of(lambda: run(active[name]), args.repeats)
            print(
                f"{name:<10} {n:>6} {t_ref * 1e3:>12.2f} {t_act * 1e3:>12.2f} "
                f"{t_ref / t_act:>8.2f}x"
            )


if __name__ == "__main__":
    main()
