"""Dataset generation and on-disk layout.

A run directory holds:
    scene.json        world description
    imu.csv           t, wx, wy, wz, fx, fy, fz (SI; integrated increments
                      over the interval ending at t, divided by dt)
    frames/NNNNN.csv  x, y, z, t_offset, label, truth_id (sensor frame)
    truth.csv         t, x, y, z, qw, qx, qy, qz (body pose, world frame)
"""

import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from ..config import RunConfig
from ..frames import LabeledFrame
from ..ins import NavState
from .imu import corrupt_imu, exact_imu_arrays
from .render import render_scan
from .scene import Scene, SceneParams, generate_scene
from .trajectory import Trajectory, make_trajectory


@dataclass
class Dataset:
    scene: Scene
    frames: list
    imu_t: np.ndarray
    imu_gyr: np.ndarray
    imu_acc: np.ndarray
    truth_t: np.ndarray
    truth_R: np.ndarray
    truth_p: np.ndarray
    frame_period: float
    initial_state: NavState
    trajectory: Trajectory | None = None  # in-memory runs only


def scene_params_from_config(cfg: RunConfig) -> SceneParams:
    s = cfg.sim
    return SceneParams(
        corridor_length=s.corridor_length_m,
        corridor_half_width=s.corridor_half_width_m,
        n_trunks=s.n_trunks,
        curved_fraction=s.curved_fraction,
        n_facades=s.n_facades,
        leaf_blobs_per_trunk=s.leaf_blobs_per_trunk,
        leaf_density=s.leaf_density,
        n_dynamic=s.n_dynamic,
    )


def generate_dataset(cfg: RunConfig, seed: int) -> Dataset:
    """Scene + labeled frames + corrupted IMU + ground truth, all seeded."""
    s = cfg.sim
    scene = generate_scene(scene_params_from_config(cfg), seed)
    traj = make_trajectory(
        s.profile, s.duration_s, speed=s.speed_mps,
        turn_radius=s.turn_radius_m, height=s.height_m,
    )
    gravity_w = np.array([0.0, 0.0, -cfg.ins.gravity_mps2])

    n_frames = int(round(s.duration_s / s.frame_period_s))
    frames = [
        render_scan(
            scene, traj, k * s.frame_period_s,
            period=s.frame_period_s,
            points_per_frame=s.points_per_frame,
            noise_sigma=s.range_noise_sigma_m,
            seed=seed,
            frame_index=k,
        )
        for k in range(n_frames)
    ]

    t, gyr, acc = exact_imu_arrays(traj, s.imu_rate_hz, gravity_w)
    gyr, acc, _, _ = corrupt_imu(t, gyr, acc, cfg.noise_params(), seed=seed + 1, t0=traj.t0)

    truth_t = np.concatenate([[traj.t0], t])
    pos, heading, _, _ = traj.state_batch(truth_t)
    truth_R = np.zeros((len(truth_t), 3, 3))
    c, sn = np.cos(heading), np.sin(heading)
    truth_R[:, 0, 0], truth_R[:, 0, 1] = c, -sn
    truth_R[:, 1, 0], truth_R[:, 1, 1] = sn, c
    truth_R[:, 2, 2] = 1.0

    R0, p0 = traj.pose(traj.t0)
    initial = NavState(R0, p0, traj.velocity(traj.t0), np.zeros(3), np.zeros(3), traj.t0)
    return Dataset(
        scene=scene,
        frames=frames,
        imu_t=t,
        imu_gyr=gyr,
        imu_acc=acc,
        truth_t=truth_t,
        truth_R=truth_R,
        truth_p=pos,
        frame_period=s.frame_period_s,
        initial_state=initial,
        trajectory=traj,
    )


# --- disk layout -----------------------------------------------------------------

def save_dataset(ds: Dataset, out_dir: str) -> None:
    os.makedirs(os.path.join(out_dir, "frames"), exist_ok=True)
    with open(os.path.join(out_dir, "scene.json"), "w") as fh:
        fh.write(ds.scene.to_json())

    imu = np.column_stack([ds.imu_t, ds.imu_gyr, ds.imu_acc])
    np.savetxt(
        os.path.join(out_dir, "imu.csv"), imu,
        delimiter=",", header="t,wx,wy,wz,fx,fy,fz", comments="", fmt="%.17g",
    )

    quat = Rotation.from_matrix(ds.truth_R).as_quat()  # x, y, z, w
    truth = np.column_stack([ds.truth_t, ds.truth_p, quat[:, 3], quat[:, 0], quat[:, 1], quat[:, 2]])
    np.savetxt(
        os.path.join(out_dir, "truth.csv"), truth,
        delimiter=",", header="t,x,y,z,qw,qx,qy,qz", comments="", fmt="%.17g",
    )

    for k, f in enumerate(ds.frames):
        rows = np.column_stack([f.points, f.t_offsets, f.labels, f.truth_ids])
        np.savetxt(
            os.path.join(out_dir, "frames", f"{k:05d}.csv"), rows,
            delimiter=",", header="x,y,z,t_offset,label,truth_id", comments="",
            fmt=["%.17g", "%.17g", "%.17g", "%.17g", "%d", "%d"],
        )


def load_dataset(path: str, frame_period: float) -> Dataset:
    with open(os.path.join(path, "scene.json")) as fh:
        scene = Scene.from_json(fh.read())

    imu = np.loadtxt(os.path.join(path, "imu.csv"), delimiter=",", skiprows=1, ndmin=2)
    truth = np.loadtxt(os.path.join(path, "truth.csv"), delimiter=",", skiprows=1, ndmin=2)
    truth_R = Rotation.from_quat(truth[:, [5, 6, 7, 4]]).as_matrix()

    frame_dir = os.path.join(path, "frames")
    frames = []
    for k, name in enumerate(sorted(os.listdir(frame_dir))):
        rows = np.loadtxt(os.path.join(frame_dir, name), delimiter=",", skiprows=1, ndmin=2)
        if rows.size == 0:
            rows = rows.reshape(0, 6)
        frames.append(
            LabeledFrame(
                t_start=k * frame_period,
                period=frame_period,
                points=rows[:, 0:3],
                t_offsets=rows[:, 3],
                labels=rows[:, 4].astype(np.int64),
                truth_ids=rows[:, 5].astype(np.int64),
            )
        )

    # initial velocity from the first truth positions
    if len(truth) > 1:
        v0 = (truth[1, 1:4] - truth[0, 1:4]) / (truth[1, 0] - truth[0, 0])
    else:
        v0 = np.zeros(3)
    initial = NavState(truth_R[0], truth[0, 1:4], v0, np.zeros(3), np.zeros(3), float(truth[0, 0]))
    return Dataset(
        scene=scene,
        frames=frames,
        imu_t=imu[:, 0],
        imu_gyr=imu[:, 1:4],
        imu_acc=imu[:, 4:7],
        truth_t=truth[:, 0],
        truth_R=truth_R,
        truth_p=truth[:, 1:4],
        frame_period=frame_period,
        initial_state=initial,
    )
