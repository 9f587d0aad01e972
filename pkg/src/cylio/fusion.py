"""Iterated error-state Kalman update fusing point-to-plane and
point-to-cylinder constraints with the INS prior, plus the per-scan
pipeline step that builds the observations.

Measurement rows live in the 15-dim error state [dtheta, dp, dv, dba, dbg];
velocity and bias columns are identically zero for both residual types.
"""

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.spatial import cKDTree

from .association import associate_points
from .errors import SingularResidual
from .frames import LabeledFrame, SemanticClass, UNSTRUCTURED_CLASSES
from .geometry import Cylinder, Plane
from .ins import I_POS, I_THETA, NavState, STATE_DIM, boxminus, boxplus, check_covariance
from .mapping import CylinderMap


class PipelineMode(str, Enum):
    """Ablation arms: plane features from raw clouds, from decluttered
    clouds, or decluttered clouds plus cylinder landmarks."""

    PLAIN = "plain"
    FILTERED = "filtered"
    CYLINDERS = "cylinders"


@dataclass(frozen=True)
class FilterConfig:
    mode: PipelineMode = PipelineMode.CYLINDERS
    max_iterations: int = 5
    convergence_tol: float = 1e-6
    sigma_plane: float = 0.05  # m, per plane observation
    sigma_c_floor2: float = 1e-6  # m^2, variance floor for cylinder obs
    assoc_threshold: float = 1.0  # m, coarse association gate
    eps_max: float = 0.02  # m; cylinder residual gate is 3x this
    max_plane_points: int = 600  # constraint budget per scan
    max_pole_points: int = 400


@dataclass(frozen=True)
class CylinderObservation:
    point_body: np.ndarray
    cylinder: Cylinder
    sigma2: float


@dataclass(frozen=True)
class PlaneObservation:
    point_body: np.ndarray
    plane: Plane
    sigma2: float


def remove_unstructured(frame: LabeledFrame) -> LabeledFrame:
    """Drop tree-leaf and dynamic-object returns, preserving order."""
    keep = ~np.isin(frame.labels, UNSTRUCTURED_CLASSES)
    return frame.select(keep)


# --- residuals and Jacobians -----------------------------------------------------

def cylinder_residuals(state: NavState, pts_body: np.ndarray, axes, q_points, radii):
    """Vectorized residual/Jacobian rows for point-to-cylinder observations.

    Returns (h, H, valid); rows with the point on the cylinder axis are
    flagged invalid instead of raising.
    """
    pts_body = np.asarray(pts_body, dtype=float).reshape(-1, 3)
    axes = np.asarray(axes, dtype=float).reshape(-1, 3)
    q_points = np.asarray(q_points, dtype=float).reshape(-1, 3)
    radii = np.asarray(radii, dtype=float).reshape(-1)
    n = len(pts_body)

    p_world = pts_body @ state.R.T + state.p
    w = np.cross(axes, p_world - q_points)
    w_norm = np.linalg.norm(w, axis=1)
    valid = w_norm >= 1e-9
    safe = np.where(valid, w_norm, 1.0)
    nw = w / safe[:, None]

    h = w_norm - radii
    H = np.zeros((n, STATE_DIM))
    # H_dp = nw^T (u x) as a row vector == -(u x nw)
    H_dp = -np.cross(axes, nw)
    # H_dtheta = -nw^T (u x) R (p_b x) == (p_b x (R^T H_dp))
    c = H_dp @ state.R
    H[:, I_THETA] = np.cross(pts_body, c)
    H[:, I_POS] = H_dp
    return h, H, valid


def plane_residuals(state: NavState, pts_body: np.ndarray, normals, offsets):
    """Vectorized residual/Jacobian rows for point-to-plane observations."""
    pts_body = np.asarray(pts_body, dtype=float).reshape(-1, 3)
    normals = np.asarray(normals, dtype=float).reshape(-1, 3)
    offsets = np.asarray(offsets, dtype=float).reshape(-1)
    n = len(pts_body)

    p_world = pts_body @ state.R.T + state.p
    h = np.einsum("ij,ij->i", normals, p_world) - offsets
    H = np.zeros((n, STATE_DIM))
    H[:, I_THETA] = np.cross(pts_body, normals @ state.R)
    H[:, I_POS] = normals
    return h, H


def cylinder_residual_jacobian(state: NavState, p_body: np.ndarray, cyl: Cylinder):
    """Scalar form of cylinder_residuals; raises SingularResidual for a
    point on the axis."""
    h, H, valid = cylinder_residuals(
        state, np.asarray(p_body).reshape(1, 3), cyl.axis_dir, cyl.axis_point, cyl.radius
    )
    if not valid[0]:
        raise SingularResidual("point lies on the cylinder axis")
    return float(h[0]), H[0]


def plane_residual_jacobian(state: NavState, p_body: np.ndarray, plane: Plane):
    h, H = plane_residuals(
        state, np.asarray(p_body).reshape(1, 3), plane.normal, np.array([plane.offset])
    )
    return float(h[0]), H[0]


# --- IESKF update ------------------------------------------------------------------

def _stack(state, cyl_obs, plane_obs, cfg):
    rows_h, rows_H, rows_r = [], [], []
    if cyl_obs:
        pts = np.array([o.point_body for o in cyl_obs])
        axes = np.array([o.cylinder.axis_dir for o in cyl_obs])
        qs = np.array([o.cylinder.axis_point for o in cyl_obs])
        radii = np.array([o.cylinder.radius for o in cyl_obs])
        h, H, valid = cylinder_residuals(state, pts, axes, qs, radii)
        rows_h.append(h[valid])
        rows_H.append(H[valid])
        rows_r.append(np.array([o.sigma2 for o in cyl_obs])[valid])
    if plane_obs:
        pts = np.array([o.point_body for o in plane_obs])
        normals = np.array([o.plane.normal for o in plane_obs])
        offsets = np.array([o.plane.offset for o in plane_obs])
        h, H = plane_residuals(state, pts, normals, offsets)
        rows_h.append(h)
        rows_H.append(H)
        rows_r.append(np.full(len(plane_obs), cfg.sigma_plane**2))
    if not rows_h:
        return np.zeros(0), np.zeros((0, STATE_DIM)), np.zeros(0)
    return np.concatenate(rows_h), np.vstack(rows_H), np.concatenate(rows_r)


def ieskf_update(
    state: NavState,
    P: np.ndarray,
    cyl_obs: list[CylinderObservation],
    plane_obs: list[PlaneObservation],
    cfg: FilterConfig,
):
    """Iterated Gauss-Newton step on the stacked weighted objective
    (prior + plane + cylinder terms) in Kalman form.

    Observations are fixed for the scan; only the linearization point moves
    between iterations. Returns (posterior state, posterior covariance,
    info dict). On divergence (three consecutive growths of |dx|) the prior
    is returned with info['diverged'] set.
    """
    info = {
        "iterations": 0,
        "converged": False,
        "diverged": False,
        "n_plane": len(plane_obs),
        "n_cyl": len(cyl_obs),
        "obj_before": 0.0,
        "obj_after": 0.0,
    }
    if not cyl_obs and not plane_obs:
        return state.copy(), P.copy(), info

    check_covariance(P)
    P_inv = np.linalg.inv(P)
    x = state.copy()
    A = None
    prev_norm = np.inf
    growths = 0

    for j in range(cfg.max_iterations):
        h, H, r_diag = _stack(x, cyl_obs, plane_obs, cfg)
        if len(h) == 0:
            return state.copy(), P.copy(), info
        e = boxminus(x, state)
        if j == 0:
            info["obj_before"] = float(e @ P_inv @ e + np.sum(h * h / r_diag))
        HtRi = H.T / r_diag
        A = HtRi @ H + P_inv
        dx = np.linalg.solve(A, -(HtRi @ h) - P_inv @ e)
        x = boxplus(x, dx)
        info["iterations"] = j + 1
        step = float(np.linalg.norm(dx))
        if step < cfg.convergence_tol:
            info["converged"] = True
            break
        if step > prev_norm:
            growths += 1
            if growths >= 3:
                info["diverged"] = True
                return state.copy(), P.copy(), info
        else:
            growths = 0
        prev_norm = step

    h, _, r_diag = _stack(x, cyl_obs, plane_obs, cfg)
    e = boxminus(x, state)
    info["obj_after"] = float(e @ P_inv @ e + np.sum(h * h / r_diag))
    # (I - KH) P == (H^T R^-1 H + P^-1)^-1 at the final linearization
    P_post = np.linalg.inv(A)
    return x, 0.5 * (P_post + P_post.T), info


# --- local plane map (plane landmark source) -----------------------------------------

class LocalPlaneMap:
    """Voxel-downsampled world point map; plane landmarks are fitted over
    the five nearest map points per query.

    Newly inserted points go into a small "fresh" index that is rebuilt
    every scan and folded into the main index once it grows, so queries at
    the advancing frontier always see the latest points.
    """

    def __init__(
        self,
        voxel: float = 0.25,
        n_neighbors: int = 5,
        max_rms: float = 0.05,
        max_nn_dist: float = 1.0,
        merge_threshold: int = 4000,
    ):
        self.voxel = voxel
        self.n_neighbors = n_neighbors
        self.max_rms = max_rms
        self.max_nn_dist = max_nn_dist
        self.merge_threshold = merge_threshold
        self._keys: set = set()
        self._main_pts = np.zeros((0, 3))
        self._main_tree: cKDTree | None = None
        self._fresh: list[np.ndarray] = []
        self._fresh_tree: cKDTree | None = None

    def __len__(self) -> int:
        return len(self._main_pts) + len(self._fresh)

    def insert(self, pts_world: np.ndarray) -> None:
        pts = np.asarray(pts_world, dtype=float).reshape(-1, 3)
        keys = np.floor(pts / self.voxel).astype(np.int64)
        added = False
        for k, p in zip(map(tuple, keys), pts):
            if k not in self._keys:
                self._keys.add(k)
                self._fresh.append(p)
                added = True
        if not added:
            return
        if len(self._fresh) >= self.merge_threshold:
            self._main_pts = np.vstack([self._main_pts, np.array(self._fresh)])
            self._main_tree = cKDTree(self._main_pts)
            self._fresh = []
            self._fresh_tree = None
        else:
            self._fresh_tree = cKDTree(np.array(self._fresh))

    def _neighbors(self, queries: np.ndarray):
        """k nearest map points per query across both indexes."""
        n, k = len(queries), self.n_neighbors
        cand_d = np.full((n, 0), np.inf)
        cand_p = np.zeros((n, 0, 3))
        for tree in (self._main_tree, self._fresh_tree):
            if tree is None or tree.n == 0:
                continue
            kk = min(k, tree.n)
            d, idx = tree.query(queries, k=kk)
            d = d.reshape(n, kk)
            pts = tree.data[idx].reshape(n, kk, 3)
            cand_d = np.concatenate([cand_d, d], axis=1)
            cand_p = np.concatenate([cand_p, pts], axis=1)
        if cand_d.shape[1] < k:
            return None, None
        order = np.argsort(cand_d, axis=1)[:, :k]
        rows = np.arange(n)[:, None]
        return cand_d[rows, order], cand_p[rows, order]

    def make_planes(self, queries_world: np.ndarray):
        """(normals, offsets, valid) for each query point; invalid when the
        neighborhood is too sparse, too far, or not flat enough."""
        queries = np.asarray(queries_world, dtype=float).reshape(-1, 3)
        n = len(queries)
        normals = np.zeros((n, 3))
        offsets = np.zeros(n)
        valid = np.zeros(n, dtype=bool)
        if n == 0 or len(self) < self.n_neighbors:
            return normals, offsets, valid
        dists, pts = self._neighbors(queries)
        if dists is None:
            return normals, offsets, valid
        ok = dists[:, -1] <= self.max_nn_dist
        if not ok.any():
            return normals, offsets, valid
        centered = pts - pts.mean(axis=1, keepdims=True)
        cov = np.einsum("nki,nkj->nij", centered, centered) / self.n_neighbors
        eigval, eigvec = np.linalg.eigh(cov)
        rms = np.sqrt(np.maximum(eigval[:, 0], 0.0))
        ok &= rms <= self.max_rms
        normals[ok] = eigvec[ok, :, 0]
        offsets[ok] = np.einsum("ij,ij->i", normals[ok], pts[ok].mean(axis=1))
        valid = ok
        return normals, offsets, valid


# --- per-scan pipeline step --------------------------------------------------------------

def _subsample(n: int, cap: int) -> np.ndarray:
    if n <= cap:
        return np.arange(n)
    return np.unique(np.round(np.linspace(0, n - 1, cap)).astype(int))


def process_scan(
    frame: LabeledFrame,
    state: NavState,
    P: np.ndarray,
    cylinder_map: CylinderMap,
    plane_map: LocalPlaneMap,
    cfg: FilterConfig,
):
    """One merged-scan measurement update.

    cylinders mode: declutter, associate pole points against the cylinder
    map, build cylinder + plane observations, update, then feed the map
    with posterior-pose pole points. filtered mode: declutter only, every
    survivor is a plane candidate. plain mode: plane candidates from the
    raw cloud. Pole points that fail association fall back to plane
    candidates, so an empty cylinder map degrades exactly to filtered mode.
    """
    if cfg.mode is PipelineMode.PLAIN:
        work = frame
    else:
        work = remove_unstructured(frame)

    cyl_obs: list[CylinderObservation] = []
    pole_body_all = np.zeros((0, 3))
    if cfg.mode is PipelineMode.CYLINDERS:
        is_pole = work.labels == SemanticClass.POLE_LIKE
        pole_body_all = work.points[is_pole]
        plane_body = work.points[~is_pole]

        sel = _subsample(len(pole_body_all), cfg.max_pole_points)
        pole_body = pole_body_all[sel]
        pole_world = pole_body @ state.R.T + state.p
        snapshot = cylinder_map.snapshot()
        associations = associate_points(pole_world, snapshot, cfg.assoc_threshold)
        unassoc = []
        for k, assoc in enumerate(associations):
            if assoc is None:
                unassoc.append(pole_body[k])
                continue
            cyl = assoc.cylinder
            resid = np.linalg.norm(np.cross(cyl.axis_dir, pole_world[k] - cyl.axis_point)) - cyl.radius
            if abs(resid) > 3.0 * cfg.eps_max:
                unassoc.append(pole_body[k])
                continue
            sigma2 = max(cyl.fit_rms**2, cfg.sigma_c_floor2)
            cyl_obs.append(CylinderObservation(pole_body[k], cyl, sigma2))
        if unassoc:
            plane_body = np.vstack([plane_body, np.array(unassoc)])
    else:
        plane_body = work.points

    sel = _subsample(len(plane_body), cfg.max_plane_points)
    plane_body = plane_body[sel]
    plane_world = plane_body @ state.R.T + state.p
    normals, offsets, valid = plane_map.make_planes(plane_world)
    plane_obs = [
        PlaneObservation(plane_body[k], Plane(normals[k], float(offsets[k])), cfg.sigma_plane**2)
        for k in np.flatnonzero(valid)
    ]

    post, P_post, info = ieskf_update(state, P, cyl_obs, plane_obs, cfg)

    plane_map.insert(plane_body @ post.R.T + post.p)
    if cfg.mode is PipelineMode.CYLINDERS:
        cylinder_map.update(pole_body_all @ post.R.T + post.p)
    return post, P_post, info
