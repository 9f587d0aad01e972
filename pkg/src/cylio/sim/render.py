"""Labeled-scan rendering: rosette ray pattern plus scene ray casting.

The pattern is a non-repetitive rosette parameterized by absolute time, so
coverage keeps growing as frames accumulate. Each frame draws its noise
and scatter uniforms from a seed sequence keyed by frame index.
"""

import numpy as np

from .. import accel
from ..frames import LabeledFrame, SemanticClass
from ..ins import Extrinsics
from .scene import Scene
from .trajectory import Trajectory

CONE_HALF_ANGLE = np.deg2rad(35.0)  # 70-degree full cone
_F_ELEV = 97.3  # Hz, elevation oscillation
_F_AZIM = 1517.77  # Hz, azimuth sweep (irrational-ish ratio to _F_ELEV)


def pattern_directions(times: np.ndarray) -> np.ndarray:
    """Unit ray directions in the sensor frame (x forward) at the given
    absolute times."""
    times = np.asarray(times, dtype=float)
    theta = CONE_HALF_ANGLE * np.abs(np.sin(2 * np.pi * _F_ELEV * times))
    phi = 2 * np.pi * _F_AZIM * times
    return np.column_stack(
        [np.cos(theta), np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi)]
    )


def render_scan(
    scene: Scene,
    traj: Trajectory,
    t_start: float,
    period: float = 0.1,
    points_per_frame: int = 2000,
    noise_sigma: float = 0.005,
    seed: int = 0,
    frame_index: int = 0,
    extrinsics: Extrinsics | None = None,
) -> LabeledFrame:
    """Render one frame: rays from the true sensor pose at each point's own
    acquisition time, nearest-hit intersection, Gaussian range noise.

    Points are returned in the sensor frame with per-point time offsets;
    truth_points hold the exact world-frame hit coordinates. Rays that hit
    nothing are dropped.
    """
    ext = extrinsics or Extrinsics.identity()
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(frame_index,)))

    offsets = (np.arange(points_per_frame) + 0.5) * (period / points_per_frame)
    times = t_start + offsets
    dirs_sensor = pattern_directions(times)

    pos, heading, _, _ = traj.state_batch(times)
    cos_h, sin_h = np.cos(heading), np.sin(heading)
    R_flat = np.zeros((len(times), 3, 3))
    R_flat[:, 0, 0], R_flat[:, 0, 1] = cos_h, -sin_h
    R_flat[:, 1, 0], R_flat[:, 1, 1] = sin_h, cos_h
    R_flat[:, 2, 2] = 1.0

    mount_body = -ext.R_l_b @ ext.p_l_b  # sensor origin in the body frame
    origins = pos + R_flat @ mount_body
    dirs_body = dirs_sensor @ ext.R_l_b.T
    dirs_world = np.einsum("nij,nj->ni", R_flat, dirs_body)

    rects, slabs, spheres, boxes, rect_labels, rect_ids, slab_ids, sphere_ids, box_ids = (
        scene.packed()
    )
    leaf_u = rng.uniform(0.0, 1.0, size=(len(times), 2))
    code, index, t_hit = accel.ray_cast(
        origins, dirs_world, times, rects, slabs, spheres, boxes, leaf_u
    )

    hit = code > 0
    code, index, t_hit = code[hit], index[hit], t_hit[hit]
    ranges = t_hit + rng.normal(0.0, noise_sigma, size=hit.sum()) if noise_sigma > 0 else t_hit

    labels = np.empty(len(code), dtype=np.int64)
    truth = np.empty(len(code), dtype=np.int64)
    m = code == 1
    labels[m] = rect_labels[index[m]]
    truth[m] = rect_ids[index[m]]
    m = code == 2
    labels[m] = int(SemanticClass.POLE_LIKE)
    truth[m] = slab_ids[index[m]]
    m = code == 3
    labels[m] = int(SemanticClass.TREE_LEAVES)
    truth[m] = sphere_ids[index[m]]
    m = code == 4
    labels[m] = int(SemanticClass.DYNAMIC_OBJECT)
    truth[m] = box_ids[index[m]]

    return LabeledFrame(
        t_start=t_start,
        period=period,
        points=dirs_sensor[hit] * ranges[:, None],
        t_offsets=offsets[hit],
        labels=labels,
        truth_ids=truth,
        truth_points=origins[hit] + dirs_world[hit] * t_hit[:, None],
    )
