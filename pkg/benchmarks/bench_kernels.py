"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 3] [--samples 100000]

Each kernel is warmed up once (JIT compile, cache load) before timing.
Prints best-of-N wall time per backend, the speedup, and the largest
absolute difference between the two outputs.
"""
import argparse
import time

import numpy as np

from normlab import _kernels_jit as jit
from normlab import _kernels_np as npk


def best_of(fn, repeat):
    fn()
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--d", type=int, default=64)
    ap.add_argument("--layers", type=int, default=1)
    args = ap.parse_args(argv)

    key = np.uint64(0x1234ABCD)
    cs = np.full(args.layers, 1.0)
    rng = np.random.default_rng(0)
    mats = [rng.standard_normal((n, n)) for n in (8, 16, 32, 64)]

    cases = {
        "normal_fill (1e6)": lambda m: m.normal_fill(key, np.uint64(0), 1_000_000)[0],
        f"mc_decay ({args.samples} x d={args.d} x {args.layers}L)": lambda m: m.mc_decay(
            key, args.samples, args.d, 30.0, 1.0, cs, np.pi / 2, np.pi / 3
        ),
        "jacobi_singular_values (8..64)": lambda m: np.concatenate(
            [np.sort(m.jacobi_singular_values(a.copy(), 1e-12, 64)[0]) for a in mats]
        ),
    }
    print(f"{'kernel':44s} {'numba s':>10s} {'numpy s':>10s} {'speedup':>8s} {'max |diff|':>11s}")
    for name, call in cases.items():
        tj, oj = best_of(lambda: call(jit), args.repeat)
        tn, on = best_of(lambda: call(npk), args.repeat)
        diff = float(np.max(np.abs(np.asarray(oj) - np.asarray(on))))
        print(f"{name:44s} {tj:10.4f} {tn:10.4f} {tn / tj:8.1f} {diff:11.2e}")


if __name__ == "__main__":
    main()
