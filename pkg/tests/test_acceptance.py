"""Acceptance suite: one test per release criterion, each printing a
single PASS/FAIL line. Run with `pytest tests/test_acceptance.py -s`.

The heavyweight scenario runs (criteria 3, 4, 5, 9) use the bundled
configs; everything else runs on synthetic fixtures. Total runtime is
dominated by the five-seed ablation study of criterion 4.
"""

import os
import subprocess
import sys
import time

import numpy as np
import pytest

from cylio import so3
from cylio.config import bundled_config
from cylio.errors import SingularResidual
from cylio.evaluate import PoseTrajectory, compute_ate_are, parse_report_csv
from cylio.fusion import (
    FilterConfig,
    PipelineMode,
    PlaneObservation,
    cylinder_residual_jacobian,
    ieskf_update,
    plane_residual_jacobian,
)
from cylio.geometry import Cylinder, Plane, fit_cylinder
from cylio.ins import (
    GRAVITY,
    ImuSample,
    NavState,
    NoiseParams,
    STATE_DIM,
    boxplus,
    merge_and_compensate,
    propagate_covariance,
)
from cylio.mapping import dbscan_cluster
from cylio.pipeline import run_pipeline
from cylio.piecewise import find_cylinder_in_tree, make_tree_model
from cylio.sim.dataset import generate_dataset
from cylio.sim.imu import exact_imu_arrays, to_samples
from cylio.sim.trajectory import make_trajectory

from conftest import cylinder_grid_points, kinked_trunk_points, random_rotation
from test_mapping import clusters_to_labels, reference_dbscan
from test_piecewise import curved_trunk_points, mean_abs_residual

G_W = np.array([0.0, 0.0, -GRAVITY])


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


def fd_row(fn, state, h=1e-6):
    J = np.zeros(STATE_DIM)
    for k in range(STATE_DIM):
        e = np.zeros(STATE_DIM)
        e[k] = h
        J[k] = (fn(boxplus(state, e)) - fn(boxplus(state, -e))) / (2 * h)
    return J


def test_criterion_1_jacobian_correctness():
    rng = np.random.default_rng(101)
    t_start = time.perf_counter()
    worst = 0.0
    n_cyl = n_plane = 0
    while n_cyl < 1000 or n_plane < 1000:
        state = NavState(
            random_rotation(rng), rng.uniform(-4, 4, 3), rng.standard_normal(3),
            0.05 * rng.standard_normal(3), 0.01 * rng.standard_normal(3),
        )
        p_b = rng.uniform(-3, 3, 3)
        if n_cyl < 1000:
            axis = rng.standard_normal(3)
            axis /= np.linalg.norm(axis)
            cyl = Cylinder(axis, rng.uniform(-3, 3, 3), float(rng.uniform(0.1, 0.5)), (-2, 2), 0.0)
            try:
                _, H = cylinder_residual_jacobian(state, p_b, cyl)
            except SingularResidual:
                continue
            assert np.all(H[6:] == 0.0)
            fd = fd_row(
                lambda s: np.linalg.norm(np.cross(cyl.axis_dir, (s.R @ p_b + s.p) - cyl.axis_point)) - cyl.radius,
                state,
            )
            worst = max(worst, np.linalg.norm(H - fd) / max(np.linalg.norm(fd), 1.0))
            n_cyl += 1
        if n_plane < 1000:
            normal = rng.standard_normal(3)
            normal /= np.linalg.norm(normal)
            plane = Plane(normal, float(rng.uniform(-2, 2)))
            _, H = plane_residual_jacobian(state, p_b, plane)
            assert np.all(H[6:] == 0.0)
            fd = fd_row(lambda s: normal @ (s.R @ p_b + s.p) - plane.offset, state)
            worst = max(worst, np.linalg.norm(H - fd) / max(np.linalg.norm(fd), 1.0))
            n_plane += 1
    elapsed = time.perf_counter() - t_start
    ok = worst <= 1e-5 and elapsed < 10.0
    report(1, ok, f"worst relative FD deviation {worst:.2e} over 2000 fixtures in {elapsed:.1f}s")


def test_criterion_2_cylinder_recovery():
    rng = np.random.default_rng(202)
    t_start = time.perf_counter()
    worst_r = worst_axis = 0.0
    for _ in range(100):
        R = random_rotation(rng)
        t = rng.uniform(-10, 10, 3)
        radius = float(rng.uniform(0.1, 0.35))
        height = float(rng.uniform(2.0, 5.0))
        axis_true = R @ np.array([0.0, 0.0, 1.0])
        pts = cylinder_grid_points([0, 0, 1], [0, 0, 0], radius, height) @ R.T + t
        cyl = fit_cylinder(pts)
        worst_r = max(worst_r, abs(cyl.radius - radius))
        ang = np.arccos(np.clip(abs(np.dot(cyl.axis_dir, axis_true)), 0, 1))
        worst_axis = max(worst_axis, ang)
    exact_ok = worst_r < 1e-6 and worst_axis < 1e-5

    hits = 0
    for k in range(100):
        R = random_rotation(rng)
        t = rng.uniform(-10, 10, 3)
        radius = float(rng.uniform(0.1, 0.35))
        axis_true = R @ np.array([0.0, 0.0, 1.0])
        pts = cylinder_grid_points([0, 0, 1], [0, 0, 0], radius, 4.0, n_heights=40, n_angles=18)
        radial = pts - np.outer(pts[:, 2], [0.0, 0.0, 1.0])
        radial /= np.linalg.norm(radial, axis=1, keepdims=True)
        pts = (pts + radial * rng.normal(0, 0.01, (len(pts), 1))) @ R.T + t
        cyl = fit_cylinder(pts)
        ang = np.arccos(np.clip(abs(np.dot(cyl.axis_dir, axis_true)), 0, 1))
        if abs(cyl.radius - radius) < 5e-3 and ang < np.deg2rad(0.5):
            hits += 1
    elapsed = time.perf_counter() - t_start
    ok = exact_ok and hits >= 95 and elapsed < 30.0
    report(
        2,
        ok,
        f"noise-free worst dr {worst_r:.2e} m / axis {worst_axis:.2e} rad; "
        f"noisy trials within tolerance {hits}/100; {elapsed:.1f}s",
    )


@pytest.fixture(scope="module")
def cli_out(tmp_path_factory):
    """Two full CLI runs of the default config at seed 42 (criteria 3, 9)."""
    out_a = str(tmp_path_factory.mktemp("cli") / "a")
    out_b = str(tmp_path_factory.mktemp("cli") / "b")
    env = dict(os.environ)
    for out in (out_a, out_b):
        proc = subprocess.run(
            [sys.executable, "-m", "cylio.cli", "all", "--seed", "42", "--out-dir", out],
            capture_output=True,
            text=True,
            env=env,
            cwd=os.path.dirname(os.path.dirname(os.path.abspath(__file__))),
        )
        assert proc.returncode == 0, proc.stderr
    return out_a, out_b


def test_criterion_3_piecewise_benefit(cli_out):
    pts = curved_trunk_points()
    deep = make_tree_model(pts, eps_max=0.02, d_max=3)
    shallow = make_tree_model(pts, eps_max=0.02, d_max=1)
    resid_deep = mean_abs_residual(pts, deep)
    resid_shallow = mean_abs_residual(pts, shallow)

    with open(os.path.join(cli_out[0], "reports", "depth_sweep.csv")) as fh:
        sweep = parse_report_csv(fh.read())
    ate_d1 = sweep["depth_1"].ate
    ate_d3 = sweep["depth_3"].ate

    ok = resid_deep < resid_shallow and ate_d3 <= ate_d1
    report(
        3,
        ok,
        f"curved-trunk mean |residual| D3 {resid_deep:.4f} < D1 {resid_shallow:.4f}; "
        f"forest_curve ATE D3 {ate_d3:.4f} <= D1 {ate_d1:.4f}",
    )


def test_criterion_4_ablation_ordering():
    cfg = bundled_config("tree_rich")
    ates = {m: [] for m in PipelineMode}
    max_run_wall = 0.0
    for seed in (1, 2, 3, 4, 5):
        ds = generate_dataset(cfg, seed=seed)
        truth = PoseTrajectory(ds.truth_t, ds.truth_R, ds.truth_p)
        for mode in PipelineMode:
            t0 = time.perf_counter()
            res = run_pipeline(ds, cfg, mode)
            max_run_wall = max(max_run_wall, time.perf_counter() - t0)
            ate, _ = compute_ate_are(res.trajectory, truth)
            ates[mode].append(ate)
    mean = {m: float(np.mean(v)) for m, v in ates.items()}
    ordering = mean[PipelineMode.CYLINDERS] <= mean[PipelineMode.FILTERED] <= mean[PipelineMode.PLAIN]
    margin = mean[PipelineMode.CYLINDERS] <= 0.8 * mean[PipelineMode.PLAIN]
    ok = ordering and margin and max_run_wall < 120.0
    report(
        4,
        ok,
        f"mean ATE cylinders {mean[PipelineMode.CYLINDERS]:.4f} <= "
        f"filtered {mean[PipelineMode.FILTERED]:.4f} <= plain {mean[PipelineMode.PLAIN]:.4f} "
        f"over 5 seeds; improvement {100 * (1 - mean[PipelineMode.CYLINDERS] / mean[PipelineMode.PLAIN]):.1f}%; "
        f"slowest run {max_run_wall:.0f}s",
    )


def test_criterion_5_degradation_guard():
    cfg = bundled_config("pole_free")
    ds = generate_dataset(cfg, seed=2)
    truth = PoseTrajectory(ds.truth_t, ds.truth_R, ds.truth_p)
    res_c = run_pipeline(ds, cfg, PipelineMode.CYLINDERS)
    res_f = run_pipeline(ds, cfg, PipelineMode.FILTERED)
    ate_c, _ = compute_ate_are(res_c.trajectory, truth)
    ate_f, _ = compute_ate_are(res_f.trajectory, truth)
    bitwise = np.array_equal(res_c.trajectory.p, res_f.trajectory.p) and np.array_equal(
        res_c.trajectory.R, res_f.trajectory.R
    )
    within = abs(ate_c - ate_f) <= 0.05 * max(ate_f, 1e-12)
    ok = bitwise and within and len(res_c.cylinder_map.trees) == 0
    report(
        5,
        ok,
        f"pole-free ATE cylinders {ate_c:.4f} vs filtered {ate_f:.4f} "
        f"({'bitwise identical' if bitwise else 'DIFFER'})",
    )


def test_criterion_6_motion_compensation():
    from cylio.frames import LabeledFrame

    # moving platform observing fixed landmarks over a 5-frame buffer
    traj = make_trajectory("circle", duration=0.5, speed=1.5, turn_radius=10.0)
    t, gyr, acc = exact_imu_arrays(traj, 200.0, G_W)
    imu = to_samples(t, gyr, acc)
    rng = np.random.default_rng(6)
    landmarks = rng.uniform(-6, 6, (40, 3)) + np.array([5.0, 0.0, 1.0])

    frames = []
    for i in range(5):
        t0 = i * 0.1
        offsets = rng.uniform(0, 0.1, 40)
        pts = np.empty((40, 3))
        for k in range(40):
            R_k, p_k = traj.pose(t0 + offsets[k])
            pts[k] = R_k.T @ (landmarks[k] - p_k)
        frames.append(
            LabeledFrame(
                t_start=t0, period=0.1, points=pts, t_offsets=offsets,
                labels=np.zeros(40, dtype=np.int64), truth_ids=np.arange(40),
            )
        )
    R0, p0 = traj.pose(0.0)
    state = NavState(R0, p0, traj.velocity(0.0), np.zeros(3), np.zeros(3), 0.0)
    merged = merge_and_compensate(frames, imu, state)
    t_end = max(f.point_times.max() for f in frames)
    R_end, p_end = traj.pose(t_end)
    spread = []
    for i in range(5):
        world = merged.points[40 * i : 40 * (i + 1)] @ R_end.T + p_end
        spread.append(np.linalg.norm(world - landmarks, axis=1))
    rms = float(np.sqrt(np.mean(np.concatenate(spread) ** 2)))

    static = [
        LabeledFrame(
            t_start=0.1 * i, period=0.1,
            points=rng.uniform(-5, 5, (30, 3)),
            t_offsets=rng.uniform(0, 0.1, 30),
            labels=np.zeros(30, dtype=np.int64),
            truth_ids=np.arange(30),
        )
        for i in range(2)
    ]
    static_imu = [ImuSample(0.005 * (k + 1), np.zeros(3), -G_W) for k in range(40)]
    merged_static = merge_and_compensate(static, static_imu, NavState.identity())
    exact = np.array_equal(merged_static.points, np.vstack([f.points for f in static]))

    ok = rms < 1e-3 and exact
    report(6, ok, f"5-frame landmark RMS spread {rms:.2e} m; static merge exact: {exact}")


def test_criterion_7_oracle_equivalence():
    rng = np.random.default_rng(707)
    # coarse association == brute force on 1e5 queries
    from cylio.mapping import MapSnapshot
    from cylio.association import associate_points

    centroids = rng.uniform(-50, 50, (50, 3))
    models = []
    for c in centroids:
        pts = cylinder_grid_points([0, 0, 1], c, 0.2, 3.0, n_heights=10, n_angles=8)
        models.append(make_tree_model(pts))
    snap = MapSnapshot(
        tree_ids=tuple(range(50)),
        models=tuple(models),
        centroids_xy=np.array([m.centroid[:2] for m in models]),
    )
    queries = rng.uniform(-55, 55, (100_000, 3))
    d = np.linalg.norm(queries[:, None, :2] - snap.centroids_xy[None], axis=2)
    brute_idx = np.argmin(d, axis=1)
    brute_min = d[np.arange(len(queries)), brute_idx]
    results = associate_points(queries, snap, assoc_threshold=3.0)
    coarse_ok = all(
        (res is None and brute_min[i] > 3.0)
        or (res is not None and res.tree_id == brute_idx[i])
        for i, res in enumerate(results)
    )

    # DBSCAN == O(n^2) reference on 50 random fixtures
    dbscan_ok = True
    for _ in range(50):
        n = int(rng.integers(20, 150))
        pts = rng.uniform(-3, 3, (n, 3))
        eps = float(rng.uniform(0.3, 0.8))
        min_pts = int(rng.integers(3, 7))
        clusters, noise = dbscan_cluster(pts, eps, min_pts)
        if not np.array_equal(clusters_to_labels(n, clusters, noise), reference_dbscan(pts, eps, min_pts)):
            dbscan_ok = False
            break

    # tree descent == exhaustive leaf argmin on >= 99% of in-extent queries
    hits = total = 0
    for seed in range(5):
        pts = kinked_trunk_points(kink_angle=0.25 + 0.02 * seed, azimuth=0.9 * seed, seed=seed)
        tree = make_tree_model(pts, eps_max=0.01, d_max=3)
        leaves = tree.root.leaves()
        q_idx = np.random.default_rng(800 + seed).integers(0, len(pts), 1000)
        for q in pts[q_idx]:
            found = find_cylinder_in_tree(q, tree)
            resid = [
                abs(float(np.linalg.norm(np.cross(l.cylinder.axis_dir, q - l.cylinder.axis_point))) - l.cylinder.radius)
                for l in leaves
            ]
            fr = abs(float(np.linalg.norm(np.cross(found.axis_dir, q - found.axis_point))) - found.radius)
            hits += fr <= min(resid) + 1e-9
            total += 1
    descent_frac = hits / total

    ok = coarse_ok and dbscan_ok and descent_frac >= 0.99
    report(
        7,
        ok,
        f"coarse==brute-force: {coarse_ok}; dbscan==reference: {dbscan_ok}; "
        f"descent==argmin on {100 * descent_frac:.2f}% of queries",
    )


def test_criterion_8_filter_convergence():
    rng = np.random.default_rng(808)
    from test_fusion import noise_free_observations

    truth = NavState(so3.rot_z(0.4), np.array([1.0, -2.0, 0.5]), np.zeros(3), np.zeros(3), np.zeros(3))
    plane_obs, cyl_obs = noise_free_observations(truth, rng)
    offset = np.zeros(STATE_DIM)
    offset[0:3] = so3.log(so3.rot_z(np.deg2rad(1.0)))
    offset[3:6] = [0.1, 0.1, 0.0]
    prior = boxplus(truth, offset)
    P = np.eye(STATE_DIM) * 1e2
    post, P_post, info = ieskf_update(prior, P, cyl_obs, plane_obs, FilterConfig(convergence_tol=1e-10))
    pos_err = float(np.linalg.norm(post.p - truth.p))
    rot_err = so3.rotation_angle(truth.R.T @ post.R)
    converge_ok = pos_err < 1e-6 and rot_err < np.deg2rad(1e-5) and info["iterations"] <= 5

    # covariance stays symmetric PSD over 1e4 propagate+update steps
    state = NavState.identity()
    P = np.eye(STATE_DIM) * 1e-4
    noise = NoiseParams()
    ground = Plane(np.array([0.0, 0, 1.0]), 0.0)
    cfg = FilterConfig(max_iterations=1)
    min_ratio = np.inf
    for k in range(10_000):
        sample = ImuSample(0.005 * (k + 1), 0.1 * rng.standard_normal(3), rng.standard_normal(3) - G_W)
        P = propagate_covariance(P, state, sample, 0.005, noise)
        if k % 10 == 0:
            obs = [PlaneObservation(rng.uniform(-2, 2, 3), ground, 0.01) for _ in range(3)]
            state, P, _ = ieskf_update(state, P, [], obs, cfg)
        if k % 500 == 0:
            eig = np.linalg.eigvalsh(P)
            min_ratio = min(min_ratio, eig.min() / np.trace(P))
    asym = float(np.abs(P - P.T).max())
    psd_ok = min_ratio >= -1e-12 and asym < 1e-12

    ok = converge_ok and psd_ok
    report(
        8,
        ok,
        f"posterior error {pos_err:.2e} m / {np.degrees(rot_err):.2e} deg in "
        f"{info['iterations']} iterations; min-eig/trace {min_ratio:.2e} over 1e4 steps",
    )


def test_criterion_9_determinism(cli_out):
    out_a, out_b = cli_out
    compared = 0
    identical = True
    for root, _, files in os.walk(out_a):
        for name in files:
            if not (name.endswith("trajectory.csv") or root.endswith("reports")):
                continue
            pa = os.path.join(root, name)
            pb = pa.replace(out_a, out_b, 1)
            with open(pa, "rb") as fa, open(pb, "rb") as fb:
                if fa.read() != fb.read():
                    identical = False
            compared += 1
    ok = identical and compared >= 11  # 7 trajectories + 4 report files
    report(9, ok, f"{compared} trajectory/report files bitwise identical across two `all --seed 42` runs")
