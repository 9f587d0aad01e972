"""Adaptive piecewise cylinder fitting of one pole-like cluster.

A cluster is fitted to a single cylinder first; if the fit residual exceeds
the threshold the cloud is split at the median axial projection and each
half is fitted recursively, bounded by a maximum tree depth. Depth-capped
or too-small subsets keep the best available (possibly over-threshold)
cylinder rather than going landmark-less, so every member point always maps
to a leaf cylinder.
"""

import dataclasses
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, NoConsensus
from .geometry import Cylinder, RansacParams, fit_cylinder, surface_residuals

DEFAULT_EPS_MAX = 0.02  # m, RMS surface-residual threshold for accepting a fit
DEFAULT_D_MAX = 3


@dataclass(eq=False)
class CylNode:
    """Binary-tree node; leaves hold exactly one cylinder, internal nodes
    record the axis and coordinate used to split their points."""

    cylinder: Cylinder | None
    depth: int
    low: "CylNode | None" = None
    high: "CylNode | None" = None
    split_axis: np.ndarray | None = None
    split_coord: float | None = None

    @property
    def is_leaf(self) -> bool:
        return self.low is None

    def leaves(self) -> list["CylNode"]:
        if self.is_leaf:
            return [self]
        return self.low.leaves() + self.high.leaves()


@dataclass(eq=False)
class TreeModel:
    """One pole-like object: piecewise cylinder tree plus coarse-match data."""

    root: CylNode
    centroid: np.ndarray
    point_count: int

    def leaf_cylinders(self) -> list[Cylinder]:
        return [leaf.cylinder for leaf in self.root.leaves()]


def divide_point_cloud(points: np.ndarray, axis: np.ndarray):
    """Split points at the median projection onto axis.

    Ties at the median go to the low half unless that would empty the high
    half. Returns (low, high, split_coord); raises DegenerateInput when all
    projections are equal.
    """
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        raise DegenerateInput(f"need at least 2 points to divide, got {len(points)}")
    proj = points @ np.asarray(axis, dtype=float)
    split = float(np.median(proj))
    low_mask = proj <= split
    if low_mask.all():
        if proj.min() == proj.max():
            raise DegenerateInput("all axial projections equal; cannot divide")
        low_mask = proj < split
    return points[low_mask], points[~low_mask], split


def _fit_with_escalation(points: np.ndarray, ransac: RansacParams) -> Cylinder:
    """Fit a cylinder, relaxing the RANSAC tolerance when a badly bent
    cluster cannot reach the consensus fraction at the nominal tolerance.

    An escalated fit keeps most points as inliers and therefore reports a
    large fit_rms, which is exactly what drives the split decision for
    clusters that a single cylinder cannot describe.
    """
    last_error = None
    for scale in (1.0, 2.0, 4.0, 8.0):
        try:
            return fit_cylinder(
                points,
                RansacParams(
                    inlier_tol=ransac.inlier_tol * scale,
                    max_iters=ransac.max_iters,
                    min_inlier_frac=ransac.min_inlier_frac,
                    seed=ransac.seed,
                ),
            )
        except NoConsensus as err:
            last_error = err
    raise last_error


def build_tree(
    points: np.ndarray,
    depth: int = 1,
    eps_max: float = DEFAULT_EPS_MAX,
    d_max: int = DEFAULT_D_MAX,
    ransac: RansacParams = RansacParams(),
) -> CylNode:
    """Recursive piecewise fit; see module docstring for the leaf policy."""
    points = np.asarray(points, dtype=float)
    try:
        cylinder = _fit_with_escalation(points, ransac)
    except (DegenerateInput, NoConsensus) as err:
        raise DegenerateInput(f"root cluster cannot be fitted: {err}") from err
    return _build(points, cylinder, depth, eps_max, d_max, ransac)


def _build(points, cylinder, depth, eps_max, d_max, ransac) -> CylNode:
    if cylinder.fit_rms < eps_max or depth >= d_max:
        return CylNode(cylinder=cylinder, depth=depth)
    try:
        low_pts, high_pts, split = divide_point_cloud(points, cylinder.axis_dir)
    except DegenerateInput:
        return CylNode(cylinder=cylinder, depth=depth)
    low_child = _fit_child(low_pts, cylinder, depth + 1, eps_max, d_max, ransac)
    high_child = _fit_child(high_pts, cylinder, depth + 1, eps_max, d_max, ransac)
    return CylNode(
        cylinder=cylinder,
        depth=depth,
        low=low_child,
        high=high_child,
        split_axis=cylinder.axis_dir.copy(),
        split_coord=split,
    )


def _restrict(cylinder: Cylinder, points: np.ndarray) -> Cylinder:
    """Re-describe a cylinder as a segment over a subset of points: extent
    and fit_rms refer to the subset, the model itself is unchanged."""
    proj = points @ cylinder.axis_dir
    lo, hi = float(proj.min()), float(proj.max())
    if not lo < hi:
        lo, hi = lo - 1e-9, hi + 1e-9
    rms = float(np.sqrt(np.mean(surface_residuals(points, cylinder) ** 2)))
    return dataclasses.replace(cylinder, axial_extent=(lo, hi), fit_rms=rms)


def _fit_child(points, parent_cylinder, depth, eps_max, d_max, ransac) -> CylNode:
    inherited = _restrict(parent_cylinder, points)
    try:
        cylinder = _fit_with_escalation(points, ransac)
    except (DegenerateInput, NoConsensus):
        # too small or too flat to fit on its own: inherit the parent's model
        return CylNode(cylinder=inherited, depth=depth)
    if inherited.fit_rms < cylinder.fit_rms:
        # a short stub can mislead the axis estimate; never let a split make
        # the local model worse than the parent already was on this subset
        return CylNode(cylinder=inherited, depth=depth)
    return _build(points, cylinder, depth, eps_max, d_max, ransac)


def make_tree_model(
    points: np.ndarray,
    eps_max: float = DEFAULT_EPS_MAX,
    d_max: int = DEFAULT_D_MAX,
    ransac: RansacParams = RansacParams(),
) -> TreeModel:
    """Build a TreeModel (tree plus centroid/point count) for one cluster."""
    points = np.asarray(points, dtype=float)
    root = build_tree(points, depth=1, eps_max=eps_max, d_max=d_max, ransac=ransac)
    return TreeModel(root=root, centroid=points.mean(axis=0), point_count=len(points))


def find_cylinder_in_tree(p: np.ndarray, tree: TreeModel) -> Cylinder:
    """Descend the tree comparing the point's axial projection against each
    split coordinate; O(depth). Points beyond the axial extent still resolve
    to the nearest-end leaf."""
    node = tree.root
    p = np.asarray(p, dtype=float)
    while not node.is_leaf:
        node = node.low if p @ node.split_axis <= node.split_coord else node.high
    return node.cylinder
