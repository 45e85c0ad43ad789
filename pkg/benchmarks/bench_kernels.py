"""Time the compiled and numpy alternating-sweep kernels on identical inputs.

Usage::

    python3 benchmarks/bench_kernels.py [--repeats 5] [--sweeps 200]

Both kernels get the same tensor and starting factors and run a fixed
number of sweeps (no stall stop), so their timings are directly
comparable. The script also reports the largest difference between the two
residual histories.
"""
import argparse
import time

import numpy as np

from nnrank import kernels

CASES = [
    ((2, 2, 2), 3),
    ((3, 3, 3), 2),
    ((3, 3, 3), 5),
    ((4, 4, 4), 4),
    ((5, 5, 5), 6),
    ((3, 3, 2, 2), 5),
]


def _inputs(shape, r, seed):
    rng = np.random.default_rng(seed)
    X = rng.random(int(np.prod(shape)))
    F = rng.random((sum(shape), r))
    return X, F


def _time(run, X, F0, shape, nonneg, sweeps, repeats):
    best, hist = np.inf, None
    for _ in range(repeats):
        F = F0.copy()
        t0 = time.perf_counter()
        hist = run(X, F, shape, nonneg, sweeps, 0.0, 0.0, 1e-12)
        best = min(best, time.perf_counter() - t0)
    return best, hist


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--sweeps", type=int, default=200)
    args = ap.parse_args(argv)
    if kernels.compiled_cp_run is None:
        raise SystemExit("compiled kernel not built; run "
                         "`python3 setup.py build_ext --inplace` first")
    print(f"{'mode':<12}{'shape':<14}{'r':>3}{'compiled ms':>14}"
          f"{'numpy ms':>12}{'speedup':>10}{'max |dh|':>12}")
    for nonneg in (True, False):
        for shape, r in CASES:
            X, F0 = _inputs(shape, r, 0)
            tc, hc = _time(kernels.compiled_cp_run, X, F0, shape, nonneg,
                           args.sweeps, args.repeats)
            tp, hp = _time(kernels.fallback_cp_run, X, F0, shape, nonneg,
                           args.sweeps, args.repeats)
            n = min(len(hc), len(hp))
            diff = float(np.max(np.abs(hc[:n] - hp[:n])))
            print(f"{'nonneg' if nonneg else 'real':<12}"
                  f"{'x'.join(map(str, shape)):<14}{r:>3}"
                  f"{1e3 * tc:>14.2f}{1e3 * tp:>12.2f}{tp / tc:>9.1f}x"
                  f"{diff:>12.1e}")


if __name__ == "__main__":
    main()
