"""Numba @njit implementations of the hot kernels.

Loop-structured twins of numpy_impl with identical contracts; compiled
lazily on first call and cached on disk.
"""

import numpy as np
from numba import njit

_EPS_RANGE = 1e-6


# --- DBSCAN -------------------------------------------------------------------

@njit(cache=True)
def _dbscan_kernel(points, eps, min_pts):
    n = points.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    eps2 = eps * eps
    counts = np.zeros(n, dtype=np.int64)
    for i in range(n):
        for j in range(n):
            d2 = 0.0
            for k in range(points.shape[1]):
                diff = points[i, k] - points[j, k]
                d2 += diff * diff
            if d2 <= eps2:
                counts[i] += 1
    core = counts >= min_pts

    stack = np.empty(n, dtype=np.int64)
    cluster = 0
    for i in range(n):
        if not core[i] or labels[i] != -1:
            continue
        labels[i] = cluster
        stack[0] = i
        top = 1
        while top > 0:
            top -= 1
            j = stack[top]
            for m in range(n):
                if core[m] and labels[m] == -1:
                    d2 = 0.0
                    for k in range(points.shape[1]):
                        diff = points[j, k] - points[m, k]
                        d2 += diff * diff
                    if d2 <= eps2:
                        labels[m] = cluster
                        stack[top] = m
                        top += 1
        cluster += 1

    for i in range(n):
        if core[i]:
            continue
        for m in range(n):
            if core[m]:
                d2 = 0.0
                for k in range(points.shape[1]):
                    diff = points[i, k] - points[m, k]
                    d2 += diff * diff
                if d2 <= eps2:
                    labels[i] = labels[m]
                    break
    return labels


def dbscan_labels(points: np.ndarray, eps: float, min_pts: int) -> np.ndarray:
    points = np.ascontiguousarray(points, dtype=np.float64)
    if len(points) == 0:
        return np.full(0, -1, dtype=np.int64)
    return _dbscan_kernel(points, float(eps), int(min_pts))


# --- IMU strapdown stream -------------------------------------------------------

@njit(cache=True)
def _exp_so3(w):
    theta = np.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    S = np.zeros((3, 3))
    S[0, 1] = -w[2]
    S[0, 2] = w[1]
    S[1, 0] = w[2]
    S[1, 2] = -w[0]
    S[2, 0] = -w[1]
    S[2, 1] = w[0]
    eye = np.eye(3)
    if theta < 1e-8:
        return eye + S + 0.5 * (S @ S)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return eye + a * S + b * (S @ S)


@njit(cache=True)
def _nearest_rotation(M):
    U, s, Vt = np.linalg.svd(M)
    R = U @ Vt
    if np.linalg.det(R) < 0.0:
        U2 = U.copy()
        U2[:, 2] = -U2[:, 2]
        R = U2 @ Vt
    return R


@njit(cache=True)
def _propagate_kernel(R0, p0, v0, ba, bg, P0, gyr, acc, dts, gravity, Ta, Tg, q_diag):
    n = dts.shape[0]
    R_hist = np.empty((n + 1, 3, 3))
    p_hist = np.empty((n + 1, 3))
    v_hist = np.empty((n + 1, 3))
    R = R0.copy()
    p = p0.copy()
    v = v0.copy()
    P = P0.copy()
    R_hist[0] = R
    p_hist[0] = p
    v_hist[0] = v
    sq_theta, sq_v, sq_a, sq_g = q_diag[0], q_diag[1], q_diag[2], q_diag[3]

    for k in range(n):
        dt = dts[k]
        w = np.empty(3)
        f = np.empty(3)
        for i in range(3):
            w[i] = (gyr[k, i] - bg[i]) * dt
            f[i] = acc[k, i] - ba[i]
        R_step = _exp_so3(w)

        Phi = np.eye(15)
        for i in range(3):
            for j in range(3):
                Phi[i, j] = R_step[j, i]
            Phi[i, 12 + i] = -dt
            Phi[3 + i, 6 + i] = dt
            Phi[9 + i, 9 + i] = 1.0 - dt / Ta
            Phi[12 + i, 12 + i] = 1.0 - dt / Tg
        fx = np.zeros((3, 3))
        fx[0, 1] = -f[2]
        fx[0, 2] = f[1]
        fx[1, 0] = f[2]
        fx[1, 2] = -f[0]
        fx[2, 0] = -f[1]
        fx[2, 1] = f[0]
        Rfx = R @ fx
        for i in range(3):
            for j in range(3):
                Phi[6 + i, j] = -Rfx[i, j] * dt
                Phi[6 + i, 9 + j] = -R[i, j] * dt

        accel_w = R @ f + gravity
        for i in range(3):
            p[i] = p[i] + v[i] * dt + 0.5 * accel_w[i] * dt * dt
            v[i] = v[i] + accel_w[i] * dt
        R = R @ R_step
        if (k + 1) % 1000 == 0:
            R = _nearest_rotation(R)

        P = Phi @ P @ Phi.T
        for i in range(3):
            P[i, i] += sq_theta * dt
            P[6 + i, 6 + i] += sq_v * dt
            P[9 + i, 9 + i] += sq_a * dt
            P[12 + i, 12 + i] += sq_g * dt
        P = 0.5 * (P + P.T)

        R_hist[k + 1] = R
        p_hist[k + 1] = p
        v_hist[k + 1] = v

    return R_hist, p_hist, v_hist, P


def propagate_imu_stream(R0, p0, v0, ba, bg, P0, gyr, acc, dts, gravity, Ta, Tg, q_diag):
    return _propagate_kernel(
        np.ascontiguousarray(R0, dtype=np.float64),
        np.ascontiguousarray(p0, dtype=np.float64),
        np.ascontiguousarray(v0, dtype=np.float64),
        np.ascontiguousarray(ba, dtype=np.float64),
        np.ascontiguousarray(bg, dtype=np.float64),
        np.ascontiguousarray(P0, dtype=np.float64),
        np.ascontiguousarray(gyr, dtype=np.float64),
        np.ascontiguousarray(acc, dtype=np.float64),
        np.ascontiguousarray(dts, dtype=np.float64),
        np.ascontiguousarray(gravity, dtype=np.float64),
        float(Ta),
        float(Tg),
        np.ascontiguousarray(q_diag, dtype=np.float64),
    )


# --- ray casting ------------------------------------------------------------------

@njit(cache=True)
def _tri_wave(x, s):
    y = (x + s) % (4.0 * s)
    if y < 2.0 * s:
        return y - s
    return 3.0 * s - y


@njit(cache=True)
def _ray_cast_kernel(origins, dirs, times, rects, slabs, spheres, boxes, leaf_u):
    n = origins.shape[0]
    code = np.zeros(n, dtype=np.int64)
    index = np.full(n, -1, dtype=np.int64)
    t_out = np.zeros(n)

    for ri in range(n):
        ox, oy, oz = origins[ri, 0], origins[ri, 1], origins[ri, 2]
        dx, dy, dz = dirs[ri, 0], dirs[ri, 1], dirs[ri, 2]
        t_best = np.inf
        c_best = 0
        i_best = -1

        for i in range(rects.shape[0]):
            nx, ny, nz = rects[i, 3], rects[i, 4], rects[i, 5]
            denom = dx * nx + dy * ny + dz * nz
            if abs(denom) <= 1e-12:
                continue
            t = ((rects[i, 0] - ox) * nx + (rects[i, 1] - oy) * ny + (rects[i, 2] - oz) * nz) / denom
            if t <= _EPS_RANGE or t >= t_best:
                continue
            lx = ox + t * dx - rects[i, 0]
            ly = oy + t * dy - rects[i, 1]
            lz = oz + t * dz - rects[i, 2]
            pu = lx * rects[i, 6] + ly * rects[i, 7] + lz * rects[i, 8]
            if abs(pu) > rects[i, 9]:
                continue
            pv = lx * rects[i, 10] + ly * rects[i, 11] + lz * rects[i, 12]
            if abs(pv) > rects[i, 13]:
                continue
            t_best = t
            c_best = 1
            i_best = i

        for i in range(slabs.shape[0]):
            ax, ay, az = slabs[i, 3], slabs[i, 4], slabs[i, 5]
            r = slabs[i, 6]
            mx = ox - slabs[i, 0]
            my = oy - slabs[i, 1]
            mz = oz - slabs[i, 2]
            ma = mx * ax + my * ay + mz * az
            da = dx * ax + dy * ay + dz * az
            mdx, mdy, mdz = mx - ma * ax, my - ma * ay, mz - ma * az
            ddx, ddy, ddz = dx - da * ax, dy - da * ay, dz - da * az
            A = ddx * ddx + ddy * ddy + ddz * ddz
            if A <= 1e-12:
                continue
            B = 2.0 * (mdx * ddx + mdy * ddy + mdz * ddz)
            C = mdx * mdx + mdy * mdy + mdz * mdz - r * r
            disc = B * B - 4.0 * A * C
            if disc < 0.0:
                continue
            sq = np.sqrt(disc)
            # stable quadratic: q-form avoids cancellation in the near root
            q = -0.5 * (B + sq) if B >= 0.0 else -0.5 * (B - sq)
            if q == 0.0:
                continue
            ta = q / A
            tb = C / q
            t = ta if ta < tb else tb
            if t <= _EPS_RANGE or t >= t_best:
                continue
            h = ma + t * da
            if h < slabs[i, 7] or h > slabs[i, 8]:
                continue
            t_best = t
            c_best = 2
            i_best = i

        for i in range(boxes.shape[0]):
            shift = _tri_wave(boxes[i, 8] + boxes[i, 7] * times[ri], boxes[i, 6])
            cx = boxes[i, 0] + shift * boxes[i, 3]
            cy = boxes[i, 1] + shift * boxes[i, 4]
            cz = boxes[i, 2] + shift * boxes[i, 5]
            t_near = -np.inf
            t_far = np.inf
            miss = False
            for ax in range(3):
                if ax == 0:
                    o_ax, d_ax, c_ax = ox - cx, dx, boxes[i, 9]
                elif ax == 1:
                    o_ax, d_ax, c_ax = oy - cy, dy, boxes[i, 10]
                else:
                    o_ax, d_ax, c_ax = oz - cz, dz, boxes[i, 11]
                if abs(d_ax) < 1e-12:
                    if abs(o_ax) > c_ax:
                        miss = True
                        break
                    continue
                t1 = (-c_ax - o_ax) / d_ax
                t2 = (c_ax - o_ax) / d_ax
                lo = min(t1, t2)
                hi = max(t1, t2)
                if lo > t_near:
                    t_near = lo
                if hi < t_far:
                    t_far = hi
            if miss or t_near > t_far:
                continue
            if t_near <= _EPS_RANGE or t_near >= t_best:
                continue
            t_best = t_near
            c_best = 4
            i_best = i

        # nearest scatter chord in front of the solid hit
        t_in_best = np.inf
        t_out_sph = 0.0
        s_best = -1
        for i in range(spheres.shape[0]):
            mx = ox - spheres[i, 0]
            my = oy - spheres[i, 1]
            mz = oz - spheres[i, 2]
            r = spheres[i, 3]
            B = 2.0 * (mx * dx + my * dy + mz * dz)
            C = mx * mx + my * my + mz * mz - r * r
            disc = B * B - 4.0 * C
            if disc < 0.0:
                continue
            sq = np.sqrt(disc)
            t1 = (-B - sq) / 2.0
            t2 = (-B + sq) / 2.0
            t_in = t1 if t1 > _EPS_RANGE else _EPS_RANGE
            if t2 > _EPS_RANGE and t_in < t_best and t_in < t_in_best:
                t_in_best = t_in
                t_out_sph = t2
                s_best = i
        if s_best >= 0:
            chord_end = t_out_sph if t_out_sph < t_best else t_best
            chord = chord_end - t_in_best
            if chord < 0.0:
                chord = 0.0
            p_hit = 1.0 - np.exp(-spheres[s_best, 4] * chord)
            if leaf_u[ri, 0] < p_hit:
                t_best = t_in_best + leaf_u[ri, 1] * chord
                c_best = 3
                i_best = s_best

        if c_best != 0:
            code[ri] = c_best
            index[ri] = i_best
            t_out[ri] = t_best

    return code, index, t_out


def ray_cast(origins, dirs, times, rects, slabs, spheres, boxes, leaf_u):
    return _ray_cast_kernel(
        np.ascontiguousarray(origins, dtype=np.float64),
        np.ascontiguousarray(dirs, dtype=np.float64),
        np.ascontiguousarray(times, dtype=np.float64),
        np.ascontiguousarray(rects, dtype=np.float64).reshape(-1, 14),
        np.ascontiguousarray(slabs, dtype=np.float64).reshape(-1, 9),
        np.ascontiguousarray(spheres, dtype=np.float64).reshape(-1, 5),
        np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 12),
        np.ascontiguousarray(leaf_u, dtype=np.float64),
    )
