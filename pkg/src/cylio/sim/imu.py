"""IMU sample streams from analytic trajectories, exact or corrupted.

Each sample carries integrated increments over the interval ending at its
timestamp, divided by the interval length (the delta-angle / delta-velocity
convention industrial IMUs output). Corruption adds first-order
Gauss-Markov bias realizations plus white noise, all seeded.
"""

import numpy as np

from .. import so3
from ..ins import ImuSample, NoiseParams
from .trajectory import Trajectory


def exact_imu_arrays(traj: Trajectory, rate: float, gravity_w) -> tuple:
    """(t, gyr, acc) arrays sampled at the given rate over the trajectory.

    gyr[k] is Log(R_{k-1}^T R_k)/dt and acc[k] is R_{k-1}^T (dv/dt - g):
    exact increments resolved at the interval-start attitude, so a
    first-order strapdown using the pre-update attitude reconstructs the
    trajectory with O(dt^3) per-step error.
    """
    dt = 1.0 / rate
    n = int(round(traj.duration * rate))
    t = traj.t0 + dt * np.arange(1, n + 1)
    gravity_w = np.asarray(gravity_w, dtype=float)
    gyr = np.empty((n, 3))
    acc = np.empty((n, 3))
    R_prev, _ = traj.pose(traj.t0)
    v_prev = traj.velocity(traj.t0)
    for k in range(n):
        R_k, _ = traj.pose(t[k])
        v_k = traj.velocity(t[k])
        gyr[k] = so3.log(R_prev.T @ R_k) / dt
        acc[k] = R_prev.T @ ((v_k - v_prev) / dt - gravity_w)
        R_prev, v_prev = R_k, v_k
    return t, gyr, acc


def corrupt_imu(t, gyr, acc, noise: NoiseParams, seed: int, t0: float | None = None):
    """Add seeded Gauss-Markov bias walks and white noise to exact streams.

    Returns (gyr_out, acc_out, bg_series, ba_series); the bias series hold
    the realized true biases at each sample, useful for diagnostics. With
    all noise densities zero the streams pass through bit-identically.
    """
    rng = np.random.default_rng(seed)
    n = len(t)
    if t0 is None:
        t0 = t[0] - (t[1] - t[0]) if n > 1 else 0.0
    dts = np.diff(np.concatenate([[t0], t]))
    gyr_out = np.array(gyr, dtype=float, copy=True)
    acc_out = np.array(acc, dtype=float, copy=True)

    bg_series = np.zeros((n, 3))
    ba_series = np.zeros((n, 3))
    # stationary initialization, then the discrete Gauss-Markov recursion
    bg = rng.standard_normal(3) * noise.sigma_ng * np.sqrt(max(noise.T_g, 1e-12) / 2.0)
    ba = rng.standard_normal(3) * noise.sigma_na * np.sqrt(max(noise.T_a, 1e-12) / 2.0)
    for k in range(n):
        dt = dts[k]
        bg = (1.0 - dt / noise.T_g) * bg + noise.sigma_ng * np.sqrt(dt) * rng.standard_normal(3)
        ba = (1.0 - dt / noise.T_a) * ba + noise.sigma_na * np.sqrt(dt) * rng.standard_normal(3)
        bg_series[k] = bg
        ba_series[k] = ba
        white_g = noise.sigma_ntheta / np.sqrt(dt) * rng.standard_normal(3)
        white_a = noise.sigma_nv / np.sqrt(dt) * rng.standard_normal(3)
        gyr_out[k] += bg + white_g
        acc_out[k] += ba + white_a
    return gyr_out, acc_out, bg_series, ba_series


def to_samples(t, gyr, acc) -> list[ImuSample]:
    return [ImuSample(float(tk), g, a) for tk, g, a in zip(t, gyr, acc)]
