"""Pure-numpy implementations of the hot kernels.

Same contracts as the numba implementations; vectorized across rays /
points where the algorithm allows, plain loops where it is sequential.
"""

import numpy as np

_EPS_RANGE = 1e-6


# --- DBSCAN -------------------------------------------------------------------

def dbscan_labels(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    """Deterministic DBSCAN labels; -1 marks noise.

    Core point: at least min_pts neighbors within eps (itself included).
    Clusters are connected components of core points; border points join
    the cluster of their lowest-index core neighbor. Cluster ids are
    assigned in first-core-index order.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = len(points)
    labels = np.full(n, -1, dtype=np.int64)
    if n == 0:
        return labels
    d2 = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=2)
    adj = d2 <= eps * eps
    core = adj.sum(axis=1) >= min_pts

    cluster = 0
    for i in range(n):
        if not core[i] or labels[i] != -1:
            continue
        stack = [i]
        labels[i] = cluster
        while stack:
            j = stack.pop()
            reach = np.flatnonzero(adj[j] & core & (labels == -1))
            labels[reach] = cluster
            stack.extend(reach.tolist())
        cluster += 1

    for i in np.flatnonzero(~core):
        core_nbrs = np.flatnonzero(adj[i] & core)
        if core_nbrs.size:
            labels[i] = labels[core_nbrs[0]]
    return labels


# --- IMU strapdown stream -------------------------------------------------------

def _exp_so3(w):
    theta = np.linalg.norm(w)
    wx, wy, wz = w
    S = np.array([[0.0, -wz, wy], [wz, 0.0, -wx], [-wy, wx, 0.0]])
    if theta < 1e-8:
        return np.eye(3) + S + 0.5 * (S @ S)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * S + b * (S @ S)


def _hat(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def _nearest_rotation(M):
    U, _, Vt = np.linalg.svd(M)
    R = U @ Vt
    if np.linalg.det(R) < 0.0:
        U[:, 2] = -U[:, 2]
        R = U @ Vt
    return R


def propagate_imu_stream(R0, p0, v0, ba, bg, P0, gyr, acc, dts, gravity, Ta, Tg, q_diag):
    """Strapdown mechanization plus error-state covariance through an IMU
    sample stream.

    q_diag holds the squared white-noise densities (attitude, velocity,
    accel bias, gyro bias); per-step Q is q_diag * dt on the matching
    blocks. Returns (R_hist, p_hist, v_hist, P) with histories including
    the initial state at index 0. The rotation is re-projected onto SO(3)
    every 1000 steps.
    """
    n = len(dts)
    R_hist = np.empty((n + 1, 3, 3))
    p_hist = np.empty((n + 1, 3))
    v_hist = np.empty((n + 1, 3))
    R = np.array(R0, dtype=np.float64)
    p = np.array(p0, dtype=np.float64)
    v = np.array(v0, dtype=np.float64)
    P = np.array(P0, dtype=np.float64)
    R_hist[0], p_hist[0], v_hist[0] = R, p, v
    sq_theta, sq_v, sq_a, sq_g = q_diag

    for k in range(n):
        dt = dts[k]
        w = gyr[k] - bg
        f = acc[k] - ba
        R_step = _exp_so3(w * dt)

        Phi = np.eye(15)
        Phi[0:3, 0:3] = R_step.T
        Phi[0:3, 12:15] = -np.eye(3) * dt
        Phi[3:6, 6:9] = np.eye(3) * dt
        Phi[6:9, 0:3] = -(R @ _hat(f)) * dt
        Phi[6:9, 9:12] = -R * dt
        Phi[9:12, 9:12] *= 1.0 - dt / Ta
        Phi[12:15, 12:15] *= 1.0 - dt / Tg

        accel_w = R @ f + gravity
        p = p + v * dt + 0.5 * accel_w * dt * dt
        v = v + accel_w * dt
        R = R @ R_step
        if (k + 1) % 1000 == 0:
            R = _nearest_rotation(R)

        P = Phi @ P @ Phi.T
        idx = np.arange(15)
        q = np.zeros(15)
        q[0:3] = sq_theta * dt
        q[6:9] = sq_v * dt
        q[9:12] = sq_a * dt
        q[12:15] = sq_g * dt
        P[idx, idx] += q
        P = 0.5 * (P + P.T)

        R_hist[k + 1], p_hist[k + 1], v_hist[k + 1] = R, p, v

    return R_hist, p_hist, v_hist, P


# --- ray casting ------------------------------------------------------------------

def _triangle_wave(x, s):
    y = np.mod(x + s, 4.0 * s)
    return np.where(y < 2.0 * s, y - s, 3.0 * s - y)


def ray_cast(origins, dirs, times, rects, slabs, spheres, boxes, leaf_u):
    """Nearest-hit ray casting against the packed scene primitives.

    rects   (R, 14) center(3) normal(3) u(3) hu v(3)... packed as
            [cx cy cz nx ny nz ux uy uz hu vx vy vz hv]
    slabs   (S, 9)  [bx by bz ax ay az r h_lo h_hi] lateral surface only
    spheres (L, 5)  [cx cy cz radius density] volumetric scatter
    boxes   (B, 12) [cx cy cz dx dy dz span speed phase hx hy hz]
            axis-aligned box whose center ping-pongs along d with the
            given half-span, speed and phase
    leaf_u  (N, 2)  pre-drawn uniforms deciding scatter hits and depths

    Returns (code, index, t): code 0 none, 1 rect, 2 slab, 3 sphere,
    4 box; index is the row within the matching primitive array; t is the
    true range. Scatter applies to the nearest sphere chord in front of
    the nearest solid hit; rays surviving the scatter draw continue to the
    solid surface.
    """
    origins = np.asarray(origins, dtype=np.float64)
    dirs = np.asarray(dirs, dtype=np.float64)
    n = len(origins)
    t_solid = np.full(n, np.inf)
    code = np.zeros(n, dtype=np.int64)
    index = np.full(n, -1, dtype=np.int64)

    for i in range(len(rects)):
        c, nrm = rects[i, 0:3], rects[i, 3:6]
        u, hu = rects[i, 6:9], rects[i, 9]
        v, hv = rects[i, 10:13], rects[i, 13]
        denom = dirs @ nrm
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((c - origins) @ nrm) / denom
        local = origins + t[:, None] * dirs - c
        ok = (
            (np.abs(denom) > 1e-12)
            & (t > _EPS_RANGE)
            & (t < t_solid)
            & (np.abs(local @ u) <= hu)
            & (np.abs(local @ v) <= hv)
        )
        t_solid[ok] = t[ok]
        code[ok] = 1
        index[ok] = i

    for i in range(len(slabs)):
        b, a = slabs[i, 0:3], slabs[i, 3:6]
        r, h_lo, h_hi = slabs[i, 6], slabs[i, 7], slabs[i, 8]
        m = origins - b
        md = m - np.outer(m @ a, a)
        dd = dirs - np.outer(dirs @ a, a)
        A = np.einsum("ij,ij->i", dd, dd)
        B = 2.0 * np.einsum("ij,ij->i", md, dd)
        C = np.einsum("ij,ij->i", md, md) - r * r
        disc = B * B - 4.0 * A * C
        valid = (A > 1e-12) & (disc >= 0.0)
        sq = np.sqrt(np.where(valid, disc, 0.0))
        # stable quadratic: q-form avoids cancellation in the near root
        q = -0.5 * (B + np.where(B >= 0.0, sq, -sq))
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(valid, np.minimum(q / np.maximum(A, 1e-300), C / q), np.inf)
            h = (m + t[:, None] * dirs) @ a
        ok = valid & (t > _EPS_RANGE) & (t < t_solid) & (h >= h_lo) & (h <= h_hi)
        t_solid[ok] = t[ok]
        code[ok] = 2
        index[ok] = i

    for i in range(len(boxes)):
        c0, d = boxes[i, 0:3], boxes[i, 3:6]
        span, speed, phase = boxes[i, 6], boxes[i, 7], boxes[i, 8]
        half = boxes[i, 9:12]
        shift = _triangle_wave(phase + speed * times, span)
        center = c0[None, :] + shift[:, None] * d[None, :]
        t_near = np.full(n, -np.inf)
        t_far = np.full(n, np.inf)
        miss = np.zeros(n, dtype=bool)
        for ax in range(3):
            o_ax = origins[:, ax] - center[:, ax]
            d_ax = dirs[:, ax]
            parallel = np.abs(d_ax) < 1e-12
            miss |= parallel & (np.abs(o_ax) > half[ax])
            with np.errstate(divide="ignore", invalid="ignore"):
                t1 = (-half[ax] - o_ax) / d_ax
                t2 = (half[ax] - o_ax) / d_ax
            lo = np.minimum(t1, t2)
            hi = np.maximum(t1, t2)
            t_near = np.where(parallel, t_near, np.maximum(t_near, lo))
            t_far = np.where(parallel, t_far, np.minimum(t_far, hi))
        t = t_near
        ok = ~miss & (t_near <= t_far) & (t > _EPS_RANGE) & (t < t_solid)
        t_solid[ok] = t[ok]
        code[ok] = 4
        index[ok] = i

    # nearest sphere chord in front of the solid hit, then a scatter draw
    if len(spheres):
        t_in_best = np.full(n, np.inf)
        t_out_best = np.zeros(n)
        sphere_idx = np.full(n, -1, dtype=np.int64)
        for i in range(len(spheres)):
            c, r = spheres[i, 0:3], spheres[i, 3]
            m = origins - c
            B = 2.0 * np.einsum("ij,ij->i", m, dirs)
            C = np.einsum("ij,ij->i", m, m) - r * r
            disc = B * B - 4.0 * C
            valid = disc >= 0.0
            sq = np.sqrt(np.where(valid, disc, 0.0))
            t1 = (-B - sq) / 2.0
            t2 = (-B + sq) / 2.0
            t_in = np.maximum(t1, _EPS_RANGE)
            ok = valid & (t2 > _EPS_RANGE) & (t_in < t_solid) & (t_in < t_in_best)
            t_in_best[ok] = t_in[ok]
            t_out_best[ok] = t2[ok]
            sphere_idx[ok] = i
        has_chord = sphere_idx >= 0
        chord_end = np.minimum(t_out_best, t_solid)
        chord_len = np.maximum(chord_end - t_in_best, 0.0)
        density = np.where(has_chord, spheres[np.maximum(sphere_idx, 0), 4], 0.0)
        p_hit = 1.0 - np.exp(-density * chord_len)
        scatter = has_chord & (leaf_u[:, 0] < p_hit)
        t_solid = np.where(scatter, t_in_best + leaf_u[:, 1] * chord_len, t_solid)
        code = np.where(scatter, 3, code)
        index = np.where(scatter, sphere_idx, index)

    t_out = np.where(np.isfinite(t_solid), t_solid, 0.0)
    return code, index, t_out
