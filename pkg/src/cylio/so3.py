"""Minimal SO(3) helpers: hat map, exponential/logarithm, interpolation.

Rotation matrices are plain (3, 3) float64 numpy arrays throughout the
package; these helpers keep the Lie-group arithmetic in one place.
"""

import numpy as np

_SMALL_ANGLE = 1e-8


def hat(w: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix such that hat(w) @ v == cross(w, v)."""
    wx, wy, wz = w
    return np.array([
        [0.0, -wz, wy],
        [wz, 0.0, -wx],
        [-wy, wx, 0.0],
    ])


def exp(w: np.ndarray) -> np.ndarray:
    """Rodrigues formula; series expansion below the small-angle cutoff."""
    theta = np.linalg.norm(w)
    S = hat(w)
    if theta < _SMALL_ANGLE:
        return np.eye(3) + S + 0.5 * (S @ S)
    a = np.sin(theta) / theta
    b = (1.0 - np.cos(theta)) / (theta * theta)
    return np.eye(3) + a * S + b * (S @ S)


def exp_batch(w: np.ndarray) -> np.ndarray:
    """Rodrigues formula over an (N, 3) array of rotation vectors."""
    w = np.asarray(w, dtype=float)
    n = len(w)
    theta = np.linalg.norm(w, axis=1)
    S = np.zeros((n, 3, 3))
    S[:, 0, 1], S[:, 0, 2] = -w[:, 2], w[:, 1]
    S[:, 1, 0], S[:, 1, 2] = w[:, 2], -w[:, 0]
    S[:, 2, 0], S[:, 2, 1] = -w[:, 1], w[:, 0]
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0, np.sin(safe) / safe)
    b = np.where(small, 0.5, (1.0 - np.cos(safe)) / (safe * safe))
    SS = np.einsum("nij,njk->nik", S, S)
    return np.eye(3)[None] + a[:, None, None] * S + b[:, None, None] * SS


def log(R: np.ndarray) -> np.ndarray:
    """Rotation vector of R; stable at both the identity and pi."""
    trace = np.clip((np.trace(R) - 1.0) * 0.5, -1.0, 1.0)
    theta = np.arccos(trace)
    if theta < _SMALL_ANGLE:
        return np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]]) * 0.5
    if np.pi - theta < 1e-6:
        # Near pi the antisymmetric part vanishes; recover the axis from R + I.
        A = R + np.eye(3)
        axis = A[:, np.argmax(np.diag(A))]
        axis = axis / np.linalg.norm(axis)
        return theta * axis
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return w * (theta / (2.0 * np.sin(theta)))


def nearest_rotation(M: np.ndarray) -> np.ndarray:
    """Project a near-rotation matrix back onto SO(3) (polar decomposition)."""
    U, _, Vt = np.linalg.svd(M)
    R = U @ Vt
    if np.linalg.det(R) < 0.0:
        U[:, 2] = -U[:, 2]
        R = U @ Vt
    return R


def interpolate(Ra: np.ndarray, Rb: np.ndarray, alpha: float) -> np.ndarray:
    """Geodesic interpolation from Ra (alpha=0) to Rb (alpha=1)."""
    return Ra @ exp(alpha * log(Ra.T @ Rb))


def rotation_angle(R: np.ndarray) -> float:
    """Geodesic distance of R from the identity, radians."""
    return float(np.linalg.norm(log(R)))


def rot_z(yaw: float) -> np.ndarray:
    c, s = np.cos(yaw), np.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
