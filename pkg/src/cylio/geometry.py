"""Geometric primitives and the single-cylinder fitting pipeline.

Points are (N, 3) float64 arrays in meters. A cylinder is fitted in four
stages: principal-axis estimate, rotation of the cloud so the axis maps to
+z, robust 2-D circle fit in the x-y projection, and back-conversion of the
circle into axis-point / radius form.
"""

from dataclasses import dataclass

import numpy as np

from . import so3
from .errors import DegenerateInput, NoConsensus

MIN_CYLINDER_POINTS = 6
MIN_AXIS_SPAN = 0.05  # m; shorter clusters do not constrain the axis

_Z = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class Circle2:
    """Circle in the plane: center (2,) and radius, meters."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0.0:
            raise DegenerateInput(f"circle radius must be positive, got {self.radius}")


@dataclass(frozen=True)
class Plane:
    """Plane as unit normal and signed offset from the origin (n.p = offset)."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        if abs(np.linalg.norm(self.normal) - 1.0) > 1e-9:
            raise DegenerateInput("plane normal must be unit length")


@dataclass(frozen=True)
class Cylinder:
    """Cylinder landmark segment.

    axis_dir     unit axis direction
    axis_point   a point on the axis, pinned at the mean inlier height
    radius       surface radius, meters
    axial_extent (low, high) projections of the member points onto axis_dir
    fit_rms      RMS orthogonal surface residual over the member points
    """

    axis_dir: np.ndarray
    axis_point: np.ndarray
    radius: float
    axial_extent: tuple
    fit_rms: float

    def __post_init__(self):
        if abs(np.linalg.norm(self.axis_dir) - 1.0) > 1e-9:
            raise DegenerateInput("cylinder axis_dir must be unit length")
        if not self.radius > 0.0:
            raise DegenerateInput(f"cylinder radius must be positive, got {self.radius}")
        low, high = self.axial_extent
        if not low < high:
            raise DegenerateInput(f"axial_extent must satisfy low < high, got {self.axial_extent}")
        if self.fit_rms < 0.0:
            raise DegenerateInput("fit_rms must be non-negative")


@dataclass(frozen=True)
class RansacParams:
    """Robust circle-fit settings (tolerance matches bark roughness at
    typical LiDAR noise; all values configurable)."""

    inlier_tol: float = 0.03
    max_iters: int = 300
    min_inlier_frac: float = 0.6
    seed: int = 0


def _apply_sign_convention(v: np.ndarray) -> np.ndarray:
    """Resolve the +/-v ambiguity: positive z, ties broken by x then y."""
    for i in (2, 0, 1):
        if v[i] > 1e-12:
            return v
        if v[i] < -1e-12:
            return -v
    return v


def estimate_axis(points: np.ndarray) -> np.ndarray:
    """Principal direction of a point cloud (largest-eigenvalue eigenvector
    of the centered covariance), unit-normalized with the sign convention."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 3:
        raise DegenerateInput(f"expected (N, 3) points, got shape {points.shape}")
    if len(points) < 3:
        raise DegenerateInput(f"need at least 3 points, got {len(points)}")
    centered = points - points.mean(axis=0)
    cov = centered.T @ centered / len(points)
    eigvals, eigvecs = np.linalg.eigh(cov)
    trace = float(eigvals.sum())
    if trace <= 0.0 or eigvals[-1] <= 1e-12 * trace:
        raise DegenerateInput("covariance is rank-deficient (collocated points)")
    axis = eigvecs[:, -1]
    return _apply_sign_convention(axis / np.linalg.norm(axis))


def axis_alignment_rotation(axis: np.ndarray) -> np.ndarray:
    """Proper rotation R with R @ axis == (0, 0, 1).

    The antipodal case (0, 0, -1) maps to a rotation by pi about the x-axis;
    near-antipodal axes are handled by composing with that flip so the
    closed-form construction stays well conditioned.
    """
    axis = np.asarray(axis, dtype=float)
    c = axis[2]
    if c < -0.99:
        flip = np.diag([1.0, -1.0, -1.0])
        return axis_alignment_rotation(flip @ axis) @ flip
    if c >= 1.0:
        return np.eye(3)
    # R = I + W + W^2 / (1 + c) with W = hat(axis x z) rotates axis onto z.
    W = so3.hat(np.array([axis[1], -axis[0], 0.0]))
    return np.eye(3) + W + (W @ W) / (1.0 + c)


def fit_circle_ls(points2d: np.ndarray) -> Circle2:
    """Algebraic least-squares circle (Kasa linearization).

    Solves the linear system in (2*x0, 2*y0, r^2 - x0^2 - y0^2) obtained by
    expanding (x - x0)^2 + (y - y0)^2 = r^2; exact on noise-free circles.
    """
    pts = np.asarray(points2d, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise DegenerateInput(f"expected (N, 2) points, got shape {pts.shape}")
    if len(pts) < 3:
        raise DegenerateInput(f"need at least 3 points, got {len(pts)}")
    A = np.column_stack([pts[:, 0], pts[:, 1], np.ones(len(pts))])
    b = pts[:, 0] ** 2 + pts[:, 1] ** 2
    N = A.T @ A
    cond = np.linalg.cond(N)
    if not np.isfinite(cond) or cond > 1e12:
        raise DegenerateInput("circle fit is singular (collinear points)")
    u = np.linalg.solve(N, A.T @ b)
    center = 0.5 * u[:2]
    r_sq = u[2] + center @ center
    if r_sq <= 0.0:
        raise DegenerateInput("circle fit produced non-positive radius")
    return Circle2(center=center, radius=float(np.sqrt(r_sq)))


def _circumcircles(samples: np.ndarray):
    """Circumcircle centers/radii of (M, 3, 2) point triples; invalid rows
    (near-collinear) are flagged False."""
    a, b, c = samples[:, 0], samples[:, 1], samples[:, 2]
    ab, ac = b - a, c - a
    det = 2.0 * (ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0])
    scale = np.maximum(np.linalg.norm(ab, axis=1) * np.linalg.norm(ac, axis=1), 1e-300)
    ok = np.abs(det) > 1e-12 * scale
    det = np.where(ok, det, 1.0)
    ab2 = np.einsum("ij,ij->i", ab, ab)
    ac2 = np.einsum("ij,ij->i", ac, ac)
    cx = a[:, 0] + (ac[:, 1] * ab2 - ab[:, 1] * ac2) / det
    cy = a[:, 1] + (ab[:, 0] * ac2 - ac[:, 0] * ab2) / det
    centers = np.column_stack([cx, cy])
    radii = np.linalg.norm(centers - a, axis=1)
    return centers, radii, ok


def ransac_fit_circle(
    points2d: np.ndarray,
    inlier_tol: float = 0.03,
    max_iters: int = 300,
    min_inlier_frac: float = 0.6,
    rng_seed: int = 0,
):
    """RANSAC circle fit: 3-point minimal circles scored by geometric
    residual, refit of the best consensus set with the algebraic fit.

    Returns (Circle2, inlier mask against the refit circle). Deterministic
    for a fixed rng_seed. Raises NoConsensus when the best consensus set is
    smaller than min_inlier_frac of the input.
    """
    pts = np.asarray(points2d, dtype=float)
    if len(pts) < 3:
        raise DegenerateInput(f"need at least 3 points, got {len(pts)}")
    n = len(pts)
    rng = np.random.default_rng(rng_seed)

    idx = rng.integers(0, n, size=(max_iters, 3))
    dup = (idx[:, 0] == idx[:, 1]) | (idx[:, 0] == idx[:, 2]) | (idx[:, 1] == idx[:, 2])
    while dup.any():
        idx[dup] = rng.integers(0, n, size=(int(dup.sum()), 3))
        dup = (idx[:, 0] == idx[:, 1]) | (idx[:, 0] == idx[:, 2]) | (idx[:, 1] == idx[:, 2])

    centers, radii, ok = _circumcircles(pts[idx])
    # |distance to center - radius| <= tol, evaluated for every candidate.
    dists = np.linalg.norm(pts[None, :, :] - centers[:, None, :], axis=2)
    inlier = np.abs(dists - radii[:, None]) <= inlier_tol
    counts = np.where(ok, inlier.sum(axis=1), -1)
    best = int(np.argmax(counts))
    if counts[best] < max(3, min_inlier_frac * n):
        raise NoConsensus(
            f"best consensus {max(counts[best], 0)}/{n} below fraction {min_inlier_frac}"
        )
    consensus = inlier[best]
    circle = fit_circle_ls(pts[consensus])
    final_dists = np.linalg.norm(pts - circle.center, axis=1)
    final_mask = np.abs(final_dists - circle.radius) <= inlier_tol
    return circle, final_mask


def _refine_cylinder(points: np.ndarray, axis, anchor, radius, iters: int = 3):
    """Damped Gauss-Newton polish of (axis, anchor, radius) minimizing the
    orthogonal surface residuals of the given points.

    The principal-axis estimate carries a systematic error of a few mrad on
    one-sided scans, which caps radius recovery; a couple of Newton steps
    remove it. The anchor stays pinned in the plane through its start
    position orthogonal to z of the local frame, preserving the axial gauge.
    """
    R = axis_alignment_rotation(axis)
    local = points @ R.T
    theta = np.array([0.0, 0.0, anchor[0], anchor[1], radius])

    def residuals(th):
        a, b, cx, cy, r = th
        d = np.array([a, b, 1.0])
        d = d / np.linalg.norm(d)
        w = np.cross(np.broadcast_to(d, local.shape), local - [cx, cy, 0.0])
        return np.linalg.norm(w, axis=1) - r, d, w

    res, d, w = residuals(theta)
    cost = float(res @ res)
    for _ in range(iters):
        norm_w = np.linalg.norm(w, axis=1)
        safe = np.maximum(norm_w, 1e-12)
        w_hat = w / safe[:, None]
        # d(resid)/d(c) = -(w_hat x d); d(resid)/d(d) = (p - c) x w_hat
        grad_c = -np.cross(w_hat, np.broadcast_to(d, w_hat.shape))
        diff = local - [theta[2], theta[3], 0.0]
        grad_d = np.cross(diff, w_hat)
        v_norm = np.linalg.norm([theta[0], theta[1], 1.0])
        # chain rule through the normalization of (a, b, 1)
        da = (np.array([1.0, 0, 0]) - d * d[0]) / v_norm
        db = (np.array([0, 1.0, 0]) - d * d[1]) / v_norm
        J = np.column_stack([grad_d @ da, grad_d @ db, grad_c[:, 0], grad_c[:, 1], -np.ones(len(local))])
        step = np.linalg.lstsq(J, -res, rcond=None)[0]
        improved = False
        for damp in (1.0, 0.5, 0.25):
            trial = theta + damp * step
            if trial[4] <= 0.0:
                continue
            res_t, d_t, w_t = residuals(trial)
            cost_t = float(res_t @ res_t)
            if cost_t < cost:
                theta, res, d, w, cost = trial, res_t, d_t, w_t, cost_t
                improved = True
                break
        if not improved:
            break

    axis_out = R.T @ d
    anchor_out = R.T @ np.array([theta[2], theta[3], 0.0])
    return _apply_sign_convention(axis_out / np.linalg.norm(axis_out)), anchor_out, float(theta[4])


def fit_cylinder(points: np.ndarray, params: RansacParams = RansacParams()) -> Cylinder:
    """Fit one cylinder to a pole-like cluster.

    Axis from the principal direction, cloud rotated so the axis maps to +z,
    robust circle fit in the x-y projection, conversion back to world
    coordinates, then a short Gauss-Newton polish of the axis/anchor/radius
    over the consensus points. The axis point is pinned at the mean
    projected height of the circle inliers so the fit is deterministic
    despite the sliding gauge freedom along the axis.
    """
    pts = np.asarray(points, dtype=float)
    if len(pts) < MIN_CYLINDER_POINTS:
        raise DegenerateInput(f"need at least {MIN_CYLINDER_POINTS} points, got {len(pts)}")
    axis = estimate_axis(pts)
    proj = pts @ axis
    if proj.max() - proj.min() <= MIN_AXIS_SPAN:
        raise DegenerateInput(
            f"cluster spans {proj.max() - proj.min():.4f} m along its axis; "
            f"need > {MIN_AXIS_SPAN} m"
        )
    R = axis_alignment_rotation(axis)
    rotated = pts @ R.T
    circle, mask = ransac_fit_circle(
        rotated[:, :2],
        inlier_tol=params.inlier_tol,
        max_iters=params.max_iters,
        min_inlier_frac=params.min_inlier_frac,
        rng_seed=params.seed,
    )
    axis, anchor, radius = _refine_cylinder(pts[mask], axis, circle.center, circle.radius)

    # final membership and gauge: inliers against the polished model
    diff = pts - anchor
    dist = np.linalg.norm(np.cross(np.broadcast_to(axis, diff.shape), diff), axis=1)
    residuals = dist - radius
    mask = np.abs(residuals) <= params.inlier_tol
    if not mask.any():
        raise DegenerateInput("no points within tolerance of the refined cylinder")
    proj = pts @ axis
    anchor_h = anchor @ axis
    z_mean = float(proj[mask].mean())
    axis_point = anchor + (z_mean - anchor_h) * axis
    # fit quality over ALL member points, not just the consensus set: a
    # bent cluster whose consensus is a tight partial band must still
    # report a large residual so the piecewise splitter reacts to it.
    fit_rms = float(np.sqrt(np.mean(residuals**2)))
    return Cylinder(
        axis_dir=axis,
        axis_point=axis_point,
        radius=radius,
        axial_extent=(float(proj.min()), float(proj.max())),
        fit_rms=fit_rms,
    )


def point_to_axis_distance(p_world: np.ndarray, cyl: Cylinder) -> float:
    """Perpendicular distance from a point to the cylinder axis line."""
    return float(np.linalg.norm(np.cross(cyl.axis_dir, np.asarray(p_world) - cyl.axis_point)))


def cylinder_surface_residual(p_world: np.ndarray, cyl: Cylinder) -> float:
    """Signed distance from the cylinder surface (zero on the surface,
    negative inside)."""
    return point_to_axis_distance(p_world, cyl) - cyl.radius


def surface_residuals(points: np.ndarray, cyl: Cylinder) -> np.ndarray:
    """Vectorized cylinder_surface_residual over an (N, 3) array."""
    d = np.asarray(points, dtype=float) - cyl.axis_point
    return np.linalg.norm(np.cross(np.broadcast_to(cyl.axis_dir, d.shape), d), axis=1) - cyl.radius
