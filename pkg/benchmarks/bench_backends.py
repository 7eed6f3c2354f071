"""Timing comparison of the compiled and pure-numpy kernel implementations.

Runs each hot kernel on representative problem sizes and reports the median
wall time per call plus the numba speedup. Works regardless of the ambient
AMMGAME_BACKEND setting because it calls both implementations directly.

    python3 benchmarks/bench_backends.py [--repeats 9]
"""

import argparse
import time

import numpy as np

from ammgame import kernels


def median_time(fn, args, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def dp_instance(steps, nx, na, m, seed=0):
    rng = np.random.default_rng(seed)
    x_grid = np.linspace(-2.0, 2.0, nx)
    atoms = np.linspace(-1.0, 1.0, na)
    reward = rng.normal(size=(steps, nx, na))
    terminal = rng.normal(size=nx)
    nodes, weights = kernels.gauss_hermite(m)
    dt = 1.0 / steps
    sig = 0.2 * np.sqrt(dt)
    return reward, terminal, x_grid, atoms, dt, sig, nodes, weights


def bench_dp(steps, nx, na, m, repeats):
    inst = dp_instance(steps, nx, na, m)
    t_np = median_time(kernels._dp_backward_np, inst, repeats)
    t_nb = median_time(kernels._dp_backward_nb, inst, repeats) if kernels.has_numba else None
    return t_np, t_nb


def bench_push(steps, nx, na, m, repeats):
    inst = dp_instance(steps, nx, na, m)
    reward, terminal, x_grid, atoms, dt, sig, nodes, weights = inst
    _, policy, _ = kernels._dp_backward_np(*inst)
    mu0 = np.full(nx, 1.0 / nx)
    args = (policy, mu0, x_grid, atoms, dt, sig, nodes, weights)
    t_np = median_time(kernels._push_forward_np, args, repeats)
    t_nb = median_time(kernels._push_forward_nb, args, repeats) if kernels.has_numba else None
    return t_np, t_nb


def bench_lvr(n_paths, steps, repeats):
    rng = np.random.default_rng(1)
    dt = 1.0 / steps
    z = rng.normal(size=(n_paths, steps)) * np.sqrt(dt)
    args = (z, 1.0, 0.2, dt, 1_000_000.0)
    t_np = median_time(kernels._lvr_paths_np, args, repeats)
    t_nb = median_time(kernels._lvr_paths_nb, args, repeats) if kernels.has_numba else None
    return t_np, t_nb


def fmt_row(label, t_np, t_nb):
    if t_nb is None:
        return f"{label:<44} {t_np * 1e3:>10.2f} {'-':>10} {'-':>8}"
    return (
        f"{label:<44} {t_np * 1e3:>10.2f} {t_nb * 1e3:>10.2f}"
        f" {t_np / t_nb:>7.1f}x"
    )


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=9, help="timed calls per case")
    args = parser.parse_args()

    if kernels.has_numba:
        # trigger compilation outside the timed region
        warm = dp_instance(4, 11, 3, 3)
        _, pol, _ = kernels._dp_backward_nb(*warm)
        kernels._push_forward_nb(pol, np.full(11, 1 / 11), *warm[2:])
        kernels._lvr_paths_nb(np.zeros((2, 4)), 1.0, 0.2, 0.25, 1e4)
    else:
        print("numba not importable: reporting numpy timings only\n")

    cases = [
        ("dp_backward  50x101x11, 7 quad nodes", bench_dp, (50, 101, 11, 7)),
        ("dp_backward  200x401x21, 7 quad nodes", bench_dp, (200, 401, 21, 7)),
        ("push_forward 50x101x11, 7 quad nodes", bench_push, (50, 101, 11, 7)),
        ("push_forward 200x401x21, 7 quad nodes", bench_push, (200, 401, 21, 7)),
        ("lvr_paths    2000 paths x 1000 steps", bench_lvr, (2000, 1000)),
        ("lvr_paths    500 paths x 10000 steps", bench_lvr, (500, 10000)),
    ]
    print(f"{'kernel / size':<44} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for label, fn, shape in cases:
        t_np, t_nb = fn(*shape, args.repeats)
        print(fmt_row(label, t_np, t_nb))


if __name__ == "__main__":
    main()
