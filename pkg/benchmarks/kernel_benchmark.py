"""Benchmark the compiled kernels against the pure-Python fallback.

Usage: python benchmarks/kernel_benchmark.py [--repeats R]

Times the three hot paths (mollified deposition, spline gather, pairwise
interaction sum) on representative problem sizes and prints one table per
kernel plus the cross-backend agreement, which should sit at rounding level.
"""

import argparse
import time

import numpy as np

from vortexsde._kernels import available_backends
from vortexsde.interp import spline_prefilter


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_deposit(backends, repeats):
    print("\ndeposit: N particles onto a G x G grid (renormalised stamps)")
    print(f"{'case':24s}" + "".join(f"{name:>14s}" for name in backends) + f"{'speedup':>10s}")
    for n, g, scale in ((1024, 128, 1024**0.2), (4096, 128, 4096**0.2), (4096, 256, 4096**0.2)):
        rng = np.random.default_rng(0)
        pos = rng.uniform(-np.pi, np.pi, (n, 2))
        amp = 0.1791 * scale**2
        radius = np.pi / (2 * scale)
        times, fields = {}, {}
        for name, mod in backends.items():
            out = np.zeros((g, g))
            times[name], _ = _time(
                lambda m=mod, o=out: m.deposit(pos, 1.0 / n, scale, amp, radius, g, o),
                repeats)
            fields[name] = out
        agree = ""
        if len(fields) == 2:
            a, b = fields.values()
            agree = f"  (max disagreement {np.abs(a - b).max():.1e})"
        row = f"N={n:5d} G={g:4d}      " + "".join(
            f"{times[name] * 1e3:11.2f} ms" for name in backends)
        speed = f"{max(times.values()) / min(times.values()):9.1f}x" if len(times) == 2 else ""
        print(row + speed + agree)


def bench_gather(backends, repeats):
    print("\nspline_gather: vector field at n points")
    print(f"{'case':24s}" + "".join(f"{name:>14s}" for name in backends) + f"{'speedup':>10s}")
    for n, g in ((4096, 128), (65536, 256)):
        rng = np.random.default_rng(1)
        coeffs = spline_prefilter(rng.standard_normal((2, g, g)))
        pts = rng.uniform(-np.pi, np.pi, (n, 2))
        times, vals = {}, {}
        for name, mod in backends.items():
            times[name], vals[name] = _time(lambda m=mod: m.spline_gather(coeffs, pts), repeats)
        agree = ""
        if len(vals) == 2:
            a, b = vals.values()
            agree = f"  (max disagreement {np.abs(a - b).max():.1e})"
        row = f"n={n:6d} G={g:4d}     " + "".join(
            f"{times[name] * 1e3:11.2f} ms" for name in backends)
        speed = f"{max(times.values()) / min(times.values()):9.1f}x" if len(times) == 2 else ""
        print(row + speed + agree)


def bench_pairwise(backends, repeats):
    print("\npairwise_sum: O(N^2) tabulated interaction")
    print(f"{'case':24s}" + "".join(f"{name:>14s}" for name in backends) + f"{'speedup':>10s}")
    for n, g in ((256, 256), (1024, 256)):
        rng = np.random.default_rng(2)
        coeffs = spline_prefilter(rng.standard_normal((2, g, g)) * 0.01)
        pts = rng.uniform(-np.pi, np.pi, (n, 2))
        times, vals = {}, {}
        for name, mod in backends.items():
            times[name], vals[name] = _time(
                lambda m=mod: m.pairwise_sum(pts, pts, coeffs, 1.0 / n, True), repeats)
        agree = ""
        if len(vals) == 2:
            a, b = vals.values()
            agree = f"  (max disagreement {np.abs(a - b).max():.1e})"
        row = f"N={n:5d} G={g:4d}      " + "".join(
            f"{times[name] * 1e3:11.2f} ms" for name in backends)
        speed = f"{max(times.values()) / min(times.values()):9.1f}x" if len(times) == 2 else ""
        print(row + speed + agree)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()
    backends = available_backends()
    print("available backends:", ", ".join(backends))
    if len(backends) == 1:
        print("compiled extension not present; timing the fallback only")
    bench_deposit(backends, args.repeats)
    bench_gather(backends, args.repeats)
    bench_pairwise(backends, args.repeats)


if __name__ == "__main__":
    main()
