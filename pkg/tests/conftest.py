import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_rotation(rng) -> np.ndarray:
    """Uniform-ish random rotation from a QR decomposition."""
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q *= np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def kinked_trunk_points(
    kink_angle: float,
    azimuth: float,
    radius: float = 0.2,
    height: float = 4.0,
    sigma: float = 0.0005,
    n_heights: int = 60,
    n_angles: int = 14,
    seed: int = 5,
) -> np.ndarray:
    """Pole bending at a single mid-height kink: lower half vertical, upper
    half tilted by kink_angle toward the given azimuth. Curvature is
    concentrated at the bend, so piecewise segments separate crisply."""
    rng = np.random.default_rng(seed)
    h = np.linspace(0.0, height, n_heights)
    phi = np.linspace(0, 2 * np.pi, n_angles, endpoint=False)
    hh, pp = np.meshgrid(h, phi, indexing="ij")
    hh, pp = hh.ravel(), pp.ravel()
    tilt_dir = np.array([np.cos(azimuth), np.sin(azimuth), 0.0])
    axis2 = np.array([0.0, 0.0, 1.0]) * np.cos(kink_angle) + tilt_dir * np.sin(kink_angle)
    kink = np.array([0.0, 0.0, height / 2])
    lower = hh <= height / 2
    centers = np.where(
        lower[:, None], np.outer(hh, [0.0, 0.0, 1.0]), kink + np.outer(hh - height / 2, axis2)
    )
    seg_axis = np.where(lower[:, None], np.tile([0.0, 0.0, 1.0], (len(hh), 1)), np.tile(axis2, (len(hh), 1)))
    e1 = np.cross(seg_axis, np.array([1.0, 0.0, 0.0]))
    e1 /= np.linalg.norm(e1, axis=1, keepdims=True)
    e2 = np.cross(seg_axis, e1)
    pts = centers + radius * (np.cos(pp)[:, None] * e1 + np.sin(pp)[:, None] * e2)
    return pts + rng.normal(0, sigma, pts.shape)


def cylinder_grid_points(
    axis: np.ndarray,
    through: np.ndarray,
    radius: float,
    height: float,
    n_heights: int = 25,
    n_angles: int = 20,
) -> np.ndarray:
    """Noise-free points on a cylinder surface, on a regular (height, angle)
    grid so the sample covariance is exactly symmetric about the true axis."""
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    ref = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(axis, ref)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    heights = np.linspace(-height / 2, height / 2, n_heights)
    angles = np.linspace(0.0, 2 * np.pi, n_angles, endpoint=False)
    hh, aa = np.meshgrid(heights, angles, indexing="ij")
    pts = (
        np.asarray(through, dtype=float)
        + hh.reshape(-1, 1) * axis
        + radius * np.cos(aa.reshape(-1, 1)) * e1
        + radius * np.sin(aa.reshape(-1, 1)) * e2
    )
    return pts
