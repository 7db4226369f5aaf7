#!/usr/bin/env python3
"""Benchmark the jitted constitutive kernels against the pure-numpy lane.

Times the fused pointwise evaluation (the inner loop of every Newton
iteration), the bulk-energy quadrature, and a short end-to-end run on each
backend, then prints a speedup table and a numerical agreement check.

Usage:
    python benchmarks/bench_backends.py [--nodes N] [--iters I] [--steps S]
"""

import argparse
import time

import numpy as np

from phaseflow import (BoundarySpec, Field, Grid, ModelSpec, State,
                       TrajectoryConfig, builtin, run, use_backend,
                       zero_source)
from phaseflow.backend import HAS_NUMBA


def timeit(fn, iters):
    times = []
    for _ in range(iters):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def bench_kernels(model, n, iters):
    rng = np.random.default_rng(0)
    theta = rng.uniform(-0.5, 1.5, n)
    chi_old = rng.uniform(-1.2, 1.2, n)
    chi_new = chi_old + rng.uniform(-1e-3, 1e-3, n)
    wts = np.full(n, 1.0 / n)
    rows = {}
    outputs = {}
    for lane in ("numpy", "numba") if HAS_NUMBA else ("numpy",):
        kern = model.kernel(lane)
        kern.arrays(theta, chi_old, chi_new)        # warm up / compile
        kern.bulk_energy(theta, chi_new, wts)
        rows[lane] = (
            timeit(lambda: kern.arrays(theta, chi_old, chi_new), iters),
            timeit(lambda: kern.bulk_energy(theta, chi_new, wts), iters),
        )
        outputs[lane] = kern.arrays(theta, chi_old, chi_new)
    return rows, outputs


def bench_run(model, nodes, steps):
    grid = Grid((1.0,), (nodes,))
    x = grid.axes()[0]
    bc = BoundarySpec("dirichlet", theta_inf=0.0)
    state = State.make(0.0, Field.full(grid, 0.0),
                       Field(grid, 0.1 * np.cos(np.pi * x)), model)
    # the FD residual has a roundoff floor of order eps/h^2, so on this
    # fine grid the production default 1e-10 is unreachable; 1e-8 is tight
    config = TrajectoryConfig(dt=1e-3, t_end=steps * 1e-3,
                              trace_every=10 ** 9, newton_tol=1e-8)
    rows = {}
    for lane in ("numpy", "numba") if HAS_NUMBA else ("numpy",):
        with use_backend(lane):
            run(state, config, model, grid, bc, zero_source())  # warm up
            t0 = time.perf_counter()
            run(state, config, model, grid, bc, zero_source())
            rows[lane] = time.perf_counter() - t0
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nodes", type=int, default=200_000,
                        help="array length for the kernel benchmark")
    parser.add_argument("--iters", type=int, default=30)
    parser.add_argument("--steps", type=int, default=200,
                        help="steps for the end-to-end benchmark (N=2048)")
    args = parser.parse_args()

    if not HAS_NUMBA:
        print("numba not installed: only the numpy lane is available")

    model = ModelSpec(builtin("mixed_j", tau_c=1.0), builtin("quartic_W"),
                      builtin("tanh_lambda"))

    print(f"\nfused constitutive kernels, {args.nodes} nodes, "
          f"median of {args.iters}")
    rows, outputs = bench_kernels(model, args.nodes, args.iters)
    base_arrays, base_energy = rows["numpy"]
    print(f"{'lane':<8} {'arrays (ms)':>12} {'energy (ms)':>12} "
          f"{'speedup':>8}")
    for lane, (t_arrays, t_energy) in rows.items():
        speed = base_arrays / t_arrays
        print(f"{lane:<8} {t_arrays * 1e3:>12.3f} {t_energy * 1e3:>12.3f} "
              f"{speed:>7.2f}x")

    if HAS_NUMBA:
        worst = max(np.max(np.abs(a - b)) for a, b in
                    zip(outputs["numpy"][:8], outputs["numba"][:8]))
        print(f"lane agreement (first 8 arrays): max |diff| = {worst:.2e}")

    print(f"\nend-to-end run, 2048 nodes, {args.steps} steps")
    rows = bench_run(model, 2048, args.steps)
    for lane, t in rows.items():
        speed = rows["numpy"] / t
        print(f"{lane:<8} {t:>10.3f} s {speed:>7.2f}x")


if __name__ == "__main__":
    main()
