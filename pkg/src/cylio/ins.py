"""Strapdown IMU mechanization, error-state covariance propagation, and
multi-frame merging with motion compensation.

The error state is the 15-vector [dtheta, dp, dv, dba, dbg] with the
rotation error on the body side: R = R_hat @ Exp(dtheta). All retractions,
Jacobians and finite-difference checks use this convention.
"""

from dataclasses import dataclass

import numpy as np

from . import accel, so3
from .errors import NonMonotoneTime, NotPSD, TimeGap
from .frames import LabeledFrame

GRAVITY = 9.80665

# error-state layout
I_THETA = slice(0, 3)
I_POS = slice(3, 6)
I_VEL = slice(6, 9)
I_BA = slice(9, 12)
I_BG = slice(12, 15)
STATE_DIM = 15


@dataclass
class NavState:
    """Pose/velocity/bias estimate; rotation is body-to-world."""

    R: np.ndarray
    p: np.ndarray
    v: np.ndarray
    ba: np.ndarray
    bg: np.ndarray
    t: float = 0.0

    @classmethod
    def identity(cls, t: float = 0.0) -> "NavState":
        return cls(np.eye(3), np.zeros(3), np.zeros(3), np.zeros(3), np.zeros(3), t)

    def copy(self) -> "NavState":
        return NavState(self.R.copy(), self.p.copy(), self.v.copy(), self.ba.copy(), self.bg.copy(), self.t)


@dataclass(frozen=True)
class ImuSample:
    """Angular rate and specific force over the interval ending at t."""

    t: float
    gyro: np.ndarray
    accel: np.ndarray


@dataclass(frozen=True)
class NoiseParams:
    """First-order Gauss-Markov bias model and white-noise densities."""

    T_a: float = 3600.0
    T_g: float = 3600.0
    sigma_na: float = 1e-5  # accel-bias driving noise density
    sigma_ng: float = 1e-7  # gyro-bias driving noise density
    sigma_ntheta: float = 5e-5  # attitude white-noise density
    sigma_nv: float = 5e-4  # velocity white-noise density
    gravity_w: tuple = (0.0, 0.0, -GRAVITY)

    @property
    def gravity(self) -> np.ndarray:
        return np.asarray(self.gravity_w, dtype=float)

    @property
    def q_diag(self) -> np.ndarray:
        return np.array(
            [self.sigma_ntheta**2, self.sigma_nv**2, self.sigma_na**2, self.sigma_ng**2]
        )


@dataclass(frozen=True)
class Extrinsics:
    """Sensor-to-body placement; the point transform is implemented as
    R_l_b @ (p_l - p_l_b)."""

    R_l_b: np.ndarray
    p_l_b: np.ndarray

    @classmethod
    def identity(cls) -> "Extrinsics":
        return cls(np.eye(3), np.zeros(3))


def boxplus(state: NavState, dx: np.ndarray) -> NavState:
    """Retract an error vector onto the state manifold."""
    return NavState(
        R=state.R @ so3.exp(dx[I_THETA]),
        p=state.p + dx[I_POS],
        v=state.v + dx[I_VEL],
        ba=state.ba + dx[I_BA],
        bg=state.bg + dx[I_BG],
        t=state.t,
    )


def boxminus(x: NavState, x_hat: NavState) -> np.ndarray:
    """Error vector of x relative to x_hat."""
    dx = np.empty(STATE_DIM)
    dx[I_THETA] = so3.log(x_hat.R.T @ x.R)
    dx[I_POS] = x.p - x_hat.p
    dx[I_VEL] = x.v - x_hat.v
    dx[I_BA] = x.ba - x_hat.ba
    dx[I_BG] = x.bg - x_hat.bg
    return dx


def mechanize(state: NavState, sample: ImuSample, dt: float, gravity_w: np.ndarray) -> NavState:
    """One strapdown step: first-order rotation exponential, velocity and
    position updates using the pre-update attitude. Biases are untouched."""
    if dt <= 0.0:
        raise NonMonotoneTime(f"dt must be positive, got {dt}")
    accel_w = state.R @ (sample.accel - state.ba) + gravity_w
    return NavState(
        R=state.R @ so3.exp((sample.gyro - state.bg) * dt),
        p=state.p + state.v * dt + 0.5 * accel_w * dt * dt,
        v=state.v + accel_w * dt,
        ba=state.ba.copy(),
        bg=state.bg.copy(),
        t=state.t + dt,
    )


def gauss_markov_step(bias: np.ndarray, dt: float, T: float) -> np.ndarray:
    """Deterministic part of the first-order Gauss-Markov bias update."""
    if T <= 0.0:
        raise ValueError(f"correlation time must be positive, got {T}")
    return (1.0 - dt / T) * np.asarray(bias, dtype=float)


def check_covariance(P: np.ndarray, rel_tol: float = 1e-9) -> None:
    """Raise NotPSD unless P is symmetric positive-semidefinite within the
    relative tolerance."""
    scale = max(float(np.abs(P).max()), 1e-12)
    if np.abs(P - P.T).max() > rel_tol * scale:
        raise NotPSD("covariance is not symmetric")
    trace = float(np.trace(P))
    min_eig = float(np.linalg.eigvalsh(0.5 * (P + P.T)).min())
    if min_eig < -rel_tol * max(trace, 1e-12):
        raise NotPSD(f"covariance has negative eigenvalue {min_eig}")


def make_phi(state: NavState, sample: ImuSample, dt: float, noise: NoiseParams) -> np.ndarray:
    """Discrete error-state transition matrix."""
    Phi = np.eye(STATE_DIM)
    w = (sample.gyro - state.bg) * dt
    f = sample.accel - state.ba
    Phi[I_THETA, I_THETA] = so3.exp(w).T
    Phi[I_THETA, I_BG] = -np.eye(3) * dt
    Phi[I_POS, I_VEL] = np.eye(3) * dt
    Phi[I_VEL, I_THETA] = -(state.R @ so3.hat(f)) * dt
    Phi[I_VEL, I_BA] = -state.R * dt
    Phi[I_BA, I_BA] = (1.0 - dt / noise.T_a) * np.eye(3)
    Phi[I_BG, I_BG] = (1.0 - dt / noise.T_g) * np.eye(3)
    return Phi


def process_noise(dt: float, noise: NoiseParams) -> np.ndarray:
    Q = np.zeros((STATE_DIM, STATE_DIM))
    sq = noise.q_diag
    Q[I_THETA, I_THETA] = sq[0] * dt * np.eye(3)
    Q[I_VEL, I_VEL] = sq[1] * dt * np.eye(3)
    Q[I_BA, I_BA] = sq[2] * dt * np.eye(3)
    Q[I_BG, I_BG] = sq[3] * dt * np.eye(3)
    return Q


def propagate_covariance(
    P: np.ndarray, state: NavState, sample: ImuSample, dt: float, noise: NoiseParams
) -> np.ndarray:
    """P <- Phi P Phi^T + Q, re-symmetrized; raises NotPSD on bad input."""
    check_covariance(P)
    Phi = make_phi(state, sample, dt, noise)
    out = Phi @ P @ Phi.T + process_noise(dt, noise)
    return 0.5 * (out + out.T)


def propagate_stream(
    state: NavState,
    P: np.ndarray,
    samples_t: np.ndarray,
    gyr: np.ndarray,
    acc: np.ndarray,
    noise: NoiseParams,
):
    """Propagate state and covariance through an IMU stream via the batch
    kernel. Sample k covers (t_{k-1}, t_k] with t_0 = state.t. Returns
    (final NavState, P, epochs, R_hist, p_hist)."""
    samples_t = np.asarray(samples_t, dtype=float)
    dts = np.diff(np.concatenate([[state.t], samples_t]))
    if np.any(dts <= 0.0):
        raise NonMonotoneTime("IMU timestamps must strictly increase from the state time")
    R_hist, p_hist, v_hist, P_out = accel.propagate_imu_stream(
        state.R, state.p, state.v, state.ba, state.bg, P, gyr, acc, dts,
        noise.gravity, noise.T_a, noise.T_g, noise.q_diag,
    )
    # biases decay deterministically toward zero with the Gauss-Markov model
    ba, bg = state.ba.copy(), state.bg.copy()
    for dt in dts:
        ba = gauss_markov_step(ba, dt, noise.T_a)
        bg = gauss_markov_step(bg, dt, noise.T_g)
    final = NavState(
        R=R_hist[-1].copy(), p=p_hist[-1].copy(), v=v_hist[-1].copy(),
        ba=ba, bg=bg, t=float(samples_t[-1]),
    )
    epochs = np.concatenate([[state.t], samples_t])
    return final, P_out, epochs, R_hist, p_hist


def lidar_to_body(p_l: np.ndarray, ext: Extrinsics) -> np.ndarray:
    """Transform sensor-frame points into the body frame."""
    p = np.asarray(p_l, dtype=float)
    return (p - ext.p_l_b) @ ext.R_l_b.T


def body_to_lidar(p_b: np.ndarray, ext: Extrinsics) -> np.ndarray:
    """Inverse of lidar_to_body."""
    return np.asarray(p_b, dtype=float) @ ext.R_l_b + ext.p_l_b


def interpolate_pose(epochs, R_hist, p_hist, t: float):
    """Pose at time t: geodesic between bracketing rotations, linear in
    translation."""
    i = int(np.searchsorted(epochs, t, side="right")) - 1
    i = min(max(i, 0), len(epochs) - 2)
    t0, t1 = epochs[i], epochs[i + 1]
    alpha = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
    R = so3.interpolate(R_hist[i], R_hist[i + 1], alpha)
    p = (1.0 - alpha) * p_hist[i] + alpha * p_hist[i + 1]
    return R, p


def merge_and_compensate(
    frames: list[LabeledFrame],
    imu: list[ImuSample],
    state_at_start: NavState,
    extrinsics: Extrinsics | None = None,
) -> LabeledFrame:
    """Merge buffered frames into the body frame of the final point epoch.

    The INS is mechanized through the buffer from the supplied start state;
    every point is transformed with the interpolated pose at its own
    acquisition time into the frame of the last point time. Labels and
    truth ids are preserved; output timestamps all equal the end epoch.
    """
    if not frames:
        raise ValueError("no frames to merge")
    ext = extrinsics or Extrinsics.identity()

    samples_t = np.array([s.t for s in imu])
    gyr = np.array([s.gyro for s in imu]).reshape(-1, 3)
    acc = np.array([s.accel for s in imu]).reshape(-1, 3)
    _, _, epochs, R_hist, p_hist = propagate_stream(
        state_at_start, np.zeros((STATE_DIM, STATE_DIM)), samples_t, gyr, acc, NoiseParams()
    )

    times = np.concatenate([f.point_times for f in frames])
    if len(times) and (times.min() < epochs[0] - 1e-12 or times.max() > epochs[-1] + 1e-12):
        raise TimeGap(
            f"point times [{times.min():.6f}, {times.max():.6f}] exceed IMU span "
            f"[{epochs[0]:.6f}, {epochs[-1]:.6f}]"
        )
    t_end = float(times.max()) if len(times) else float(epochs[-1])
    R_end, p_end = interpolate_pose(epochs, R_hist, p_hist, t_end)

    body = lidar_to_body(np.vstack([f.points for f in frames]), ext)
    # batched pose interpolation: per-interval rotation deltas, scaled per
    # point by its fraction into the interval
    idx = np.clip(np.searchsorted(epochs, times, side="right") - 1, 0, len(epochs) - 2)
    t0, t1 = epochs[idx], epochs[idx + 1]
    alpha = (times - t0) / (t1 - t0)
    deltas = np.stack([so3.log(R_hist[i].T @ R_hist[i + 1]) for i in range(len(epochs) - 1)])
    dR = so3.exp_batch(alpha[:, None] * deltas[idx])
    R_pts = np.einsum("nij,njk->nik", R_hist[idx], dR)
    p_pts = (1.0 - alpha)[:, None] * p_hist[idx] + alpha[:, None] * p_hist[idx + 1]
    world = np.einsum("nij,nj->ni", R_pts, body) + p_pts
    compensated = (world - p_end) @ R_end

    return LabeledFrame(
        t_start=t_end,
        period=0.0,
        points=compensated,
        t_offsets=np.zeros(sum(len(f) for f in frames)),
        labels=np.concatenate([f.labels for f in frames]),
        truth_ids=np.concatenate([f.truth_ids for f in frames]),
        truth_points=(
            np.vstack([f.truth_points for f in frames])
            if all(f.truth_points is not None for f in frames)
            else None
        ),
    )
