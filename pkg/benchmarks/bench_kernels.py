#!/usr/bin/env python3
"""Timing comparison: compiled pointwise kernels vs the numpy reference.

Both implementations ship in every install — the compiled extension is
preferred at import, the reference is the fallback — so this script times
them side by side:

  * each hot kernel (cross, longitudinal_term, rhs_combine, rotate_about,
    norm_moments) on a few grid sizes, best-of-``--repeat`` wall times;
  * one full semi-implicit step (FFTs, stray solve and all), run in a child
    process per backend so the import-time selection is exercised for real.

Usage:  python benchmarks/bench_kernels.py [--sizes 32x32x16,...]
                                           [--repeat 5] [--no-step]
"""

import argparse
import subprocess
import sys
import time

import numpy as np

from llbfilm import kernels
from llbfilm.kernels import _ref

KERNELS = ("cross", "longitudinal_term", "rhs_combine", "rotate_about",
           "norm_moments")


def _args_for(name, rng, shape):
    u = rng.standard_normal((*shape, 3))
    h = rng.standard_normal((*shape, 3))
    if name == "cross":
        return (u, h)
    if name == "longitudinal_term":
        return (u, 0.5, 1.5)
    if name == "rhs_combine":
        return (u, h, 0.7, 0.3)
    if name == "rotate_about":
        return (u, h, 1e-3)
    return (u,)          # norm_moments


def _best(fn, args, repeat):
    """Best-of-``repeat`` wall time, with the call count auto-calibrated
    so each measurement lasts at least ~5 ms."""
    loops = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(loops):
            fn(*args)
        dt = time.perf_counter() - t0
        if dt >= 5e-3 or loops >= 1 << 14:
            break
        loops *= 2
    best = dt / loops
    for _ in range(repeat - 1):
        t0 = time.perf_counter()
        for _ in range(loops):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / loops)
    return best


def bench_kernels(sizes, repeat):
    have_compiled = kernels.BACKEND == "compiled"
    if not have_compiled:
        print("note: compiled backend unavailable; timing the reference "
              "implementation only\n")
    header = f"{'kernel':<18}{'grid':<12}{'python':>10}"
    if have_compiled:
        header += f"{'compiled':>10}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    rng = np.random.default_rng(0)
    for shape in sizes:
        label = "x".join(map(str, shape))
        for name in KERNELS:
            args = _args_for(name, rng, shape)
            t_py = _best(getattr(_ref, name), args, repeat)
            row = f"{name:<18}{label:<12}{t_py * 1e3:>9.3f}m"
            if have_compiled:
                t_c = _best(getattr(kernels, name), args, repeat)
                row += f"{t_c * 1e3:>9.3f}m{t_py / t_c:>8.1f}x"
            print(row)
        print()


_STEP_SNIPPET = """\
import time
import numpy as np
from llbfilm import kernels
from llbfilm.grid import make_grid, smooth_random_field
from llbfilm.model import ModelParams
from llbfilm.stepping import run, SimConfig
from llbfilm.strayfield import shared_solver

grid = make_grid(32, 32, 16, h=0.1)
params = ModelParams(exchange=0.02, gyro=1.0, relax=1.0, chi=2.0, mu=1.5)
u0 = smooth_random_field(grid, np.random.default_rng(3), kmax=3, mmax=2)
solver = shared_solver(grid, 4)
cfg = SimConfig(dt=1e-3, t_end=0.02, record_every=10**9)
run(u0, params, cfg, solver=solver)          # warm-up (plans, caches)
t0 = time.perf_counter()
tr = run(u0, params, cfg, solver=solver)
dt = time.perf_counter() - t0
print(f"{kernels.BACKEND} {tr.state.step / dt:.1f} steps/s "
      f"({dt / tr.state.step * 1e3:.2f} ms/step)")
"""


def bench_full_step():
    print("full semi-implicit step, 32x32x16 film, stray field on:")
    import os
    for env in ({}, {"LLBFILM_FORCE_PY": "1"}):
        proc = subprocess.run([sys.executable, "-c", _STEP_SNIPPET],
                              capture_output=True, text=True,
                              env={**os.environ, **env})
        if proc.returncode:
            print(proc.stderr.strip())
            continue
        print("  " + proc.stdout.strip())


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="16x16x8,32x32x16,64x64x16",
                    help="comma-separated nx x ny x nz grids")
    ap.add_argument("--repeat", type=int, default=5,
                    help="timing repetitions per kernel (best is kept)")
    ap.add_argument("--no-step", action="store_true",
                    help="skip the end-to-end step benchmark")
    opts = ap.parse_args()
    sizes = [tuple(int(v) for v in s.split("x"))
             for s in opts.sizes.split(",")]
    bench_kernels(sizes, opts.repeat)
    if not opts.no_step:
        bench_full_step()


if __name__ == "__main__":
    main()
