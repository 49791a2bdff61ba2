#!/usr/bin/env python3
"""Benchmark the Monte Carlo tally kernels: numba vs pure numpy.

Both backends consume identical pre-drawn uniforms and must return
identical tallies; this script checks that and times them.

Usage:
    python benchmarks/bench_kernels.py
    python benchmarks/bench_kernels.py --trials 1000000 --hosts 20
    python benchmarks/bench_kernels.py --output results.json
"""

import argparse
import json
import time

import numpy as np

from fopsim import kernels


def time_fn(fn, uniforms, q, repeats):
    best = float("inf")
    result = None
    for _ in range(repeats):
        start = time.perf_counter()
        result = fn(uniforms, q)
        best = min(best, time.perf_counter() - start)
    return best, result


def run(trials, hosts, q, repeats):
    rng = np.random.default_rng(1234)
    uniforms = rng.random((trials, hosts))

    rows = []
    numpy_time, numpy_result = time_fn(kernels.tally_savings_numpy,
                                       uniforms, q, repeats)
    row = {"backend": "numpy", "trials": trials, "hosts": hosts,
           "seconds": numpy_time, "tally": list(numpy_result)}
    rows.append(row)

    if kernels.NUMBA_ENABLED:
        kernels.tally_savings_numba(uniforms[:64], q)  # JIT warmup
        numba_time, numba_result = time_fn(kernels.tally_savings_numba,
                                           uniforms, q, repeats)
        assert numba_result == numpy_result, "backends disagree"
        rows.append({"backend": "numba", "trials": trials, "hosts": hosts,
                     "seconds": numba_time, "tally": list(numba_result)})
        speedup = numpy_time / numba_time if numba_time else float("inf")
    else:
        speedup = None

    print(f"{'backend':>8} {'trials':>10} {'hosts':>6} {'best (s)':>12} "
          f"{'Mtrials/s':>10}")
    for row in rows:
        rate = row["trials"] / row["seconds"] / 1e6
        print(f"{row['backend']:>8} {row['trials']:>10} {row['hosts']:>6} "
              f"{row['seconds']:>12.6f} {rate:>10.1f}")
    if speedup is not None:
        print(f"numba speedup over numpy: {speedup:.2f}x")
    else:
        print("numba backend disabled (FOPSIM_NO_NUMBA set or numba missing)")
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trials", type=int, default=1_000_000)
    parser.add_argument("--hosts", type=int, default=20,
                        help="primary plus secondaries per trial")
    parser.add_argument("--q", type=float, default=0.607,
                        help="per-host hit probability")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--output", type=str, default=None,
                        help="write timings as JSON")
    args = parser.parse_args()

    rows = run(args.trials, args.hosts, args.q, args.repeats)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            json.dump(rows, fh, indent=2)
        print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
