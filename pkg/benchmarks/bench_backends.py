#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Covers the three hot paths: scene ray casting, IMU strapdown + covariance
streaming, and DBSCAN labeling. The numba timings exclude JIT compilation
(one warmup call per kernel).

Usage:
  python benchmarks/bench_backends.py [--rays 200000] [--imu-steps 60000]
                                      [--dbscan-points 1500] [--repeats 3]
"""

import argparse
import time

import numpy as np

from cylio.accel import numba_impl, numpy_impl


def timeit(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def ray_workload(n_rays, seed=0):
    rng = np.random.default_rng(seed)
    origins = rng.uniform(-2, 2, (n_rays, 3)) + np.array([0, 0, 1.5])
    dirs = rng.standard_normal((n_rays, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    times = rng.uniform(0, 0.1, n_rays)
    rects = np.array(
        [
            np.concatenate([[30, 0, 0], [0, 0, 1], [1, 0, 0], [60], [0, 1, 0], [20]]),
            np.concatenate([[20, 10, 3], [0, -1, 0], [1, 0, 0], [12], [0, 0, 1], [3]]),
        ],
        dtype=float,
    )
    slab_rows = []
    for k in range(40):
        slab_rows.append([3.0 * k, 5.0 * (-1) ** k, 0, 0, 0, 1, 0.25, 0, 5.0])
    slabs = np.array(slab_rows)
    spheres = np.array([[3.0 * k, 5.0 * (-1) ** k, 5.5, 1.3, 1.5] for k in range(40)])
    boxes = np.array([[15.0, 0, 0.6, 0, 1, 0, 6.0, 1.0, 2.0, 0.5, 0.8, 0.6]])
    leaf_u = rng.uniform(0, 1, (n_rays, 2))
    return origins, dirs, times, rects, slabs, spheres, boxes, leaf_u


def imu_workload(n_steps, seed=1):
    rng = np.random.default_rng(seed)
    R0 = np.eye(3)
    args = (
        R0,
        np.zeros(3),
        np.array([1.5, 0, 0]),
        0.01 * rng.standard_normal(3),
        0.001 * rng.standard_normal(3),
        np.eye(15) * 1e-4,
        0.2 * rng.standard_normal((n_steps, 3)),
        rng.standard_normal((n_steps, 3)) + np.array([0, 0, 9.80665]),
        np.full(n_steps, 0.005),
        np.array([0.0, 0.0, -9.80665]),
        3600.0,
        3600.0,
        np.array([2.5e-9, 2.5e-7, 1e-10, 1e-14]),
    )
    return args


def dbscan_workload(n_points, seed=2):
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-20, 20, (12, 3))
    pts = np.vstack([c + 0.2 * rng.standard_normal((n_points // 12, 3)) for c in centers])
    return pts, 0.4, 5


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--rays", type=int, default=200_000)
    parser.add_argument("--imu-steps", type=int, default=60_000)
    parser.add_argument("--dbscan-points", type=int, default=1_500)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    jobs = [
        ("ray_cast", f"{args.rays} rays x 83 primitives", "ray_cast", ray_workload(args.rays)),
        ("imu_stream", f"{args.imu_steps} strapdown+cov steps", "propagate_imu_stream", imu_workload(args.imu_steps)),
        ("dbscan", f"{args.dbscan_points} points", "dbscan_labels", dbscan_workload(args.dbscan_points)),
    ]

    print(f"{'kernel':<12} {'workload':<28} {'numpy[s]':>10} {'numba[s]':>10} {'speedup':>8}")
    for name, desc, fn_name, workload in jobs:
        fn_np = getattr(numpy_impl, fn_name)
        fn_nb = getattr(numba_impl, fn_name)
        fn_nb(*workload)  # JIT warmup
        t_np = timeit(lambda: fn_np(*workload), args.repeats)
        t_nb = timeit(lambda: fn_nb(*workload), args.repeats)
        print(f"{name:<12} {desc:<28} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
