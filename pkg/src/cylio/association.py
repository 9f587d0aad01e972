"""Coarse-to-fine point-to-cylinder association.

Coarse stage: brute-force nearest tree by horizontal (x-y) distance to the
tree centroid, so tall trees match points at any height. Fine stage: binary
descent of the winning tree. Pure read-only functions over a map snapshot.
"""

from dataclasses import dataclass

import numpy as np

from .geometry import Cylinder
from .mapping import MapSnapshot
from .piecewise import find_cylinder_in_tree

DEFAULT_ASSOC_THRESHOLD = 1.0  # m, matches the map's new-tree match radius


@dataclass(frozen=True)
class Association:
    point_index: int
    tree_id: int
    cylinder: Cylinder
    distance_to_centroid: float


def associate_point(
    p_world: np.ndarray,
    snapshot: MapSnapshot,
    assoc_threshold: float = DEFAULT_ASSOC_THRESHOLD,
) -> Association | None:
    """Associate one world-frame point; None when every tree is farther
    than the threshold (never a forced match)."""
    result = associate_points(np.asarray(p_world, dtype=float).reshape(1, 3), snapshot, assoc_threshold)
    return result[0]


def associate_points(
    points_world: np.ndarray,
    snapshot: MapSnapshot,
    assoc_threshold: float = DEFAULT_ASSOC_THRESHOLD,
) -> list[Association | None]:
    """Vectorized coarse stage over all points, then per-point tree descent.
    Ties in the coarse stage resolve to the lowest tree id (argmin order)."""
    points = np.asarray(points_world, dtype=float).reshape(-1, 3)
    if len(snapshot) == 0 or len(points) == 0:
        return [None] * len(points)
    d = np.linalg.norm(points[:, None, :2] - snapshot.centroids_xy[None, :, :], axis=2)
    winner = np.argmin(d, axis=1)
    best = d[np.arange(len(points)), winner]
    out: list[Association | None] = []
    for i in range(len(points)):
        if best[i] > assoc_threshold:
            out.append(None)
            continue
        t = int(winner[i])
        cyl = find_cylinder_in_tree(points[i], snapshot.models[t])
        out.append(
            Association(
                point_index=i,
                tree_id=snapshot.tree_ids[t],
                cylinder=cyl,
                distance_to_centroid=float(best[i]),
            )
        )
    return out
