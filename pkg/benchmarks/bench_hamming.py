"""Times the packed-code Hamming scan on both backends.

Runs a grid of gallery sizes and code widths, takes the best of
`--repeats` timed passes for each backend, and prints queries/second
plus the compiled extension's speedup over the numpy fallback.

Usage: python3 benchmarks/bench_hamming.py [--repeats 5] [--queries 64]
"""

import argparse
import time

import numpy as np

from dcsh import _hamming_py

try:
    from dcsh import _hammingx
except ImportError:
    _hammingx = None


def time_scan(impl, gallery, queries, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for q in queries:
            impl.scan_distances(gallery, q)
        best = min(best, time.perf_counter() - start)
    return best / queries.shape[0]


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5,
                        help="timed passes per cell, best kept")
    parser.add_argument("--queries", type=int, default=64,
                        help="queries per timed pass")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    grid = [
        (10_000, 32),
        (10_000, 64),
        (100_000, 32),
        (100_000, 64),
        (100_000, 128),
        (1_000_000, 64),
    ]
    print(f"{'N':>9}  {'bits':>4}  {'numpy us/q':>10}  "
          f"{'cython us/q':>11}  {'speedup':>7}")
    for N, bits in grid:
        W = (bits + 63) // 64
        gallery = rng.integers(0, np.iinfo(np.uint64).max, size=(N, W),
                               dtype=np.uint64, endpoint=True)
        queries = rng.integers(0, np.iinfo(np.uint64).max,
                               size=(args.queries, W),
                               dtype=np.uint64, endpoint=True)
        t_py = time_scan(_hamming_py, gallery, queries, args.repeats)
        if _hammingx is None:
            print(f"{N:>9}  {bits:>4}  {t_py * 1e6:>10.1f}  "
                  f"{'absent':>11}  {'-':>7}")
            continue
        fast = _hammingx.scan_distances(gallery, queries[0])
        slow = _hamming_py.scan_distances(gallery, queries[0])
        if not np.array_equal(np.asarray(fast), slow):
            raise AssertionError("backends disagree; benchmark aborted")
        t_cy = time_scan(_hammingx, gallery, queries, args.repeats)
        print(f"{N:>9}  {bits:>4}  {t_py * 1e6:>10.1f}  "
              f"{t_cy * 1e6:>11.1f}  {t_py / t_cy:>6.1f}x")


if __name__ == "__main__":
    main()
