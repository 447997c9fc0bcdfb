"""Benchmark the conv/pool kernels: numba @njit loops vs the numpy fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--batch 32] [--reps 20]

The first numba call per kernel compiles (cached afterwards); timings exclude
the warmup call.
"""

import argparse
import time

import numpy as np

from anyprune import kernels


def time_call(fn, reps):
    fn()  # warmup (and numba compile)
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--batch", type=int, default=32)
    parser.add_argument("--reps", type=int, default=20)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    x = rng.standard_normal((args.batch, 8, 28, 28))
    w = rng.standard_normal((16, 8, 3, 3))
    gout = rng.standard_normal((args.batch, 16, 28, 28))

    cases = {
        "conv2d_fwd": lambda: kernels.conv2d_fwd(x, w, 1, 1),
        "conv2d_bwd": lambda: kernels.conv2d_bwd(x, w, gout, 1, 1),
        "meanpool2_fwd": lambda: kernels.meanpool2_fwd(x),
        "meanpool2_bwd": lambda: kernels.meanpool2_bwd(x, gout[:, :8, :14, :14]),
    }

    backends = ["numpy"] + (["numba"] if kernels.HAS_NUMBA else [])
    results = {}
    for backend in backends:
        kernels.use_backend(backend)
        for name, fn in cases.items():
            results[(backend, name)] = time_call(fn, args.reps)

    print(f"batch={args.batch}  reps={args.reps}  (best-of timings, ms)")
    header = f"{'kernel':<16}" + "".join(f"{b:>12}" for b in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for name in cases:
        row = f"{name:<16}"
        for backend in backends:
            row += f"{results[(backend, name)] * 1e3:>12.3f}"
        if len(backends) == 2:
            row += f"{results[('numpy', name)] / results[('numba', name)]:>9.2f}x"
        print(row)


if __name__ == "__main__":
    main()
