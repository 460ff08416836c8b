"""Benchmark the compiled stencil kernels against the numpy fallbacks.

Run directly:  python benchmarks/bench_kernels.py [--sizes 32 48 64]

The same comparison can be forced package-wide by setting PILOTWAVE_NO_EXT=1
before importing pilotwave (the fallback is then selected at import time).
"""

import argparse
import time

import numpy as np

from pilotwave import kernels
from pilotwave.core import Grid3, PhysicalParams
from pilotwave.kleingordon import KleinGordonSolver


def _time(fn, repeat=7):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_size(n: int):
    rng = np.random.default_rng(0)
    shape = (n, n, n)
    f = np.ascontiguousarray(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    out = np.empty_like(f)
    spacing = (1.0 / n,) * 3
    inv = [1.0 / h**2 for h in spacing]
    ref = kernels.force_numpy_reference()

    rows = []
    for boundary in ("dirichlet", "periodic"):
        t_np = _time(lambda: ref[f"laplacian_{boundary}"](f, out, *inv))
        if kernels.HAVE_EXT:
            t_ext = _time(lambda: kernels.laplacian(f, spacing, boundary, out=out))
        else:
            t_ext = float("nan")
        rows.append((f"laplacian {boundary} {n}^3", t_np, t_ext))

    pts = rng.uniform(0, 0.9, size=(20000, 3))
    t_np = _time(lambda: ref["trilinear"](f, pts, spacing, False))
    if kernels.HAVE_EXT:
        o = np.empty(len(pts), dtype=np.complex128)
        t_ext = _time(lambda: kernels.trilinear(f, pts, spacing, "dirichlet"))
    else:
        t_ext = float("nan")
    rows.append((f"trilinear 2e4 pts {n}^3", t_np, t_ext))

    # one full source-free leapfrog step through the solver (stencil path)
    grid = Grid3(points=shape, extents=(1.0, 1.0, 1.0), boundary="periodic")
    solver = KleinGordonSolver(grid, PhysicalParams(), laplacian="stencil")
    phi = f.copy()
    phid = f.copy() * 0.1
    t_step = _time(lambda: solver.leapfrog(phi, phid, None, 1e-4))
    rows.append((f"kg leapfrog step {n}^3", float("nan"), t_step))
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 48, 64])
    args = ap.parse_args()
    print(f"compiled extension available: {kernels.HAVE_EXT}")
    print(f"{'kernel':<28} {'numpy [ms]':>12} {'compiled [ms]':>14} {'speedup':>9}")
    for n in args.sizes:
        for name, t_np, t_ext in bench_size(n):
            ratio = t_np / t_ext if t_ext == t_ext and t_np == t_np else float("nan")
            print(
                f"{name:<28} {1e3 * t_np:>12.3f} {1e3 * t_ext:>14.3f} {ratio:>9.2f}"
            )


if __name__ == "__main__":
    main()
