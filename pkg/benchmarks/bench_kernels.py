"""Compare the compiled kernels against the NumPy fallback.

Usage::

    python benchmarks/bench_kernels.py [--n 200000] [--repeat 5]

Prints the best-of-``repeat`` wall time of each kernel for both backends
and the maximum absolute difference between their outputs.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from hybridheat import _kernels_py

try:
    from hybridheat import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def best_time(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def max_diff(a, b):
    if isinstance(a, tuple):
        return max(max_diff(x, y) for x, y in zip(a, b))
    return float(np.max(np.abs(np.asarray(a) - np.asarray(b))))


def cases(n, rng):
    # random well-shaped triangles in the unit square
    base = rng.random((n, 1, 2))
    P = base + 0.01 * rng.random((n, 3, 2))
    verts = np.ascontiguousarray(P.reshape(-1, 2))
    tris = np.ascontiguousarray(np.arange(3 * n, dtype=np.int64).reshape(n, 3))
    T = rng.random(3 * n) * 1.2
    base_src = np.full(3 * n, 0.01)
    burned = rng.random(3 * n) < 0.5
    box = (0.25, 0.75, 0.25, 0.75)
    Pc = np.ascontiguousarray(P)
    args = (-2.4, 1.0, -2.4, 2.0)
    return {
        "p1_geometry": lambda m: m.p1_geometry(verts, tris),
        "erf_source": lambda m: m.erf_source(T, *args, base_src, burned),
        "clip_triangles_box": lambda m: m.clip_triangles_box(Pc, box),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--n", type=int, default=200_000, help="number of triangles")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'python [s]':>12}{'cython [s]':>12}{'ratio':>8}{'max diff':>12}")
    for name, call in cases(args.n, rng).items():
        tp, op = best_time(lambda: call(_kernels_py), args.repeat)
        if _ckernels is None:
            print(f"{name:<22}{tp:>12.4f}{'n/a':>12}")
            continue
        tc, oc = best_time(lambda: call(_ckernels), args.repeat)
        print(f"{name:<22}{tp:>12.4f}{tc:>12.4f}{tp / tc:>8.1f}{max_diff(op, oc):>12.2e}")


if __name__ == "__main__":
    main()
