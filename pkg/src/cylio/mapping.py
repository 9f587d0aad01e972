"""World-frame cylinder landmark map.

Pole points arriving each frame are matched to existing trees by horizontal
distance to the tree centroid; leftovers are clustered with DBSCAN and
dense clusters seed new trees. Trees refit on a bounded cadence and forget
points older than the sliding frame window.
"""

import io
from dataclasses import dataclass

import numpy as np

from . import accel
from .errors import DegenerateInput, NoConsensus
from .geometry import RansacParams
from .piecewise import DEFAULT_D_MAX, DEFAULT_EPS_MAX, CylNode, TreeModel, make_tree_model


@dataclass(frozen=True)
class ClusterParams:
    """Density clustering and tree-seeding thresholds. Defaults follow
    trunk diameters of 0.2-0.6 m and inter-tree spacing of 2 m or more."""

    dbscan_eps: float = 0.3
    dbscan_min_pts: int = 5
    min_cluster_size: int = 30
    merge_radius: float = 0.5
    match_radius: float = 1.0


@dataclass(frozen=True)
class MapParams:
    cluster: ClusterParams = ClusterParams()
    init_frames: int = 3
    buffer_capacity: int = 20  # frames; also the point age-out horizon
    refit_frac: float = 0.10  # refit when a tree gained this fraction...
    refit_count: int = 50  # ...or this many points since its last fit
    eps_max: float = DEFAULT_EPS_MAX
    d_max: int = DEFAULT_D_MAX
    ransac: RansacParams = RansacParams()


def dbscan_cluster(points: np.ndarray, eps: float, min_pts: int):
    """Standard DBSCAN. Returns (clusters, noise) as lists of index arrays;
    deterministic given input order (see accel.dbscan_labels for the exact
    core/border rule)."""
    points = np.asarray(points, dtype=float)
    labels = accel.dbscan_labels(points, eps, min_pts)
    clusters = [np.flatnonzero(labels == c) for c in range(labels.max() + 1)] if len(labels) else []
    noise = np.flatnonzero(labels == -1)
    return clusters, noise


@dataclass(eq=False)
class TreeEntry:
    """One mapped pole-like object with its retained support points."""

    tree_id: int
    model: TreeModel
    points: np.ndarray  # (N, 3) world frame
    frame_ids: np.ndarray  # (N,) frame index of each point
    points_at_last_fit: int


@dataclass(frozen=True)
class MapSnapshot:
    """Immutable view for association: parallel lists of ids/models plus
    cached horizontal centroid coordinates."""

    tree_ids: tuple
    models: tuple
    centroids_xy: np.ndarray  # (T, 2)

    def __len__(self) -> int:
        return len(self.tree_ids)


class CylinderMap:
    """Single-writer landmark map; snapshots are safe to read concurrently."""

    def __init__(self, params: MapParams = MapParams()):
        self.params = params
        self.trees: list[TreeEntry] = []
        self.frame_buffer: list[tuple[int, np.ndarray]] = []
        # points that neither matched a tree nor formed a cluster yet;
        # they accumulate over the sliding window until dense enough
        self.unclaimed_points = np.zeros((0, 3))
        self.unclaimed_fids = np.zeros(0, dtype=np.int64)
        self.initialized = False
        self.frame_index = 0
        self._next_tree_id = 0

    def snapshot(self) -> MapSnapshot:
        if not self.trees:
            return MapSnapshot((), (), np.zeros((0, 2)))
        return MapSnapshot(
            tree_ids=tuple(e.tree_id for e in self.trees),
            models=tuple(e.model for e in self.trees),
            centroids_xy=np.array([e.model.centroid[:2] for e in self.trees]),
        )

    # -- update ------------------------------------------------------------

    def update(self, pole_points_world: np.ndarray) -> None:
        """Ingest one frame of world-frame pole points (may be empty)."""
        points = np.asarray(pole_points_world, dtype=float).reshape(-1, 3)
        fid = self.frame_index
        self.frame_index += 1
        self.frame_buffer.append((fid, points))
        if len(self.frame_buffer) > self.params.buffer_capacity:
            self.frame_buffer.pop(0)

        self.unclaimed_points = np.vstack([self.unclaimed_points, points])
        self.unclaimed_fids = np.concatenate(
            [self.unclaimed_fids, np.full(len(points), fid, dtype=np.int64)]
        )

        if not self.initialized:
            if len(self.frame_buffer) < self.params.init_frames:
                return
            self.initialized = True

        grown = self._ingest(fid)
        self._refit(grown)
        self._age_out(fid)

    def _ingest(self, fid: int) -> set:
        """Claim pooled points for existing trees, then cluster the rest;
        unclustered points stay pooled for later frames. Returns the ids of
        trees that gained points."""
        cl = self.params.cluster
        grown: set[int] = set()
        pts, fids = self.unclaimed_points, self.unclaimed_fids
        if len(pts) == 0:
            return grown

        if self.trees:
            centroids = np.array([e.model.centroid[:2] for e in self.trees])
            d = np.linalg.norm(pts[:, None, :2] - centroids[None, :, :], axis=2)
            nearest = np.argmin(d, axis=1)
            matched = d[np.arange(len(pts)), nearest] <= cl.match_radius
        else:
            nearest = np.zeros(len(pts), dtype=int)
            matched = np.zeros(len(pts), dtype=bool)

        for ti in range(len(self.trees)):
            sel = matched & (nearest == ti)
            if sel.any():
                entry = self.trees[ti]
                entry.points = np.vstack([entry.points, pts[sel]])
                entry.frame_ids = np.concatenate([entry.frame_ids, fids[sel]])
                grown.add(entry.tree_id)

        remaining = ~matched
        claimed = self._seed_trees(pts[remaining], fids[remaining])
        keep = np.flatnonzero(remaining)[~claimed]
        self.unclaimed_points = pts[keep]
        self.unclaimed_fids = fids[keep]
        return grown

    def _seed_trees(self, points, fids) -> np.ndarray:
        """Cluster candidate points into new trees; returns a mask over the
        input marking which points were consumed."""
        cl = self.params.cluster
        claimed = np.zeros(len(points), dtype=bool)
        if len(points) == 0:
            return claimed
        clusters, _ = dbscan_cluster(points, cl.dbscan_eps, cl.dbscan_min_pts)
        clusters = [c for c in clusters if len(c) >= cl.min_cluster_size]
        # fold together fresh clusters whose centroids sit closer than the
        # map's minimum tree separation
        merged: list[np.ndarray] = []
        for c in clusters:
            cen = points[c].mean(axis=0)
            for i, m in enumerate(merged):
                if np.linalg.norm(points[m].mean(axis=0)[:2] - cen[:2]) < cl.merge_radius:
                    merged[i] = np.concatenate([m, c])
                    break
            else:
                merged.append(c)
        for c in merged:
            try:
                model = make_tree_model(
                    points[c],
                    eps_max=self.params.eps_max,
                    d_max=self.params.d_max,
                    ransac=self.params.ransac,
                )
            except (DegenerateInput, NoConsensus):
                continue
            self.trees.append(
                TreeEntry(
                    tree_id=self._next_tree_id,
                    model=model,
                    points=points[c].copy(),
                    frame_ids=fids[c].copy(),
                    points_at_last_fit=len(c),
                )
            )
            self._next_tree_id += 1
            claimed[c] = True
        return claimed

    def _refit(self, grown: set) -> None:
        for entry in self.trees:
            if entry.tree_id not in grown:
                continue
            gained = len(entry.points) - entry.points_at_last_fit
            if gained < self.params.refit_count and gained < self.params.refit_frac * max(
                entry.points_at_last_fit, 1
            ):
                # cheap update: keep the cylinders, track the support set
                entry.model.centroid = entry.points.mean(axis=0)
                entry.model.point_count = len(entry.points)
                continue
            try:
                entry.model = make_tree_model(
                    entry.points,
                    eps_max=self.params.eps_max,
                    d_max=self.params.d_max,
                    ransac=self.params.ransac,
                )
            except (DegenerateInput, NoConsensus):
                entry.model.centroid = entry.points.mean(axis=0)
                entry.model.point_count = len(entry.points)
                continue
            entry.points_at_last_fit = len(entry.points)

    def _age_out(self, current_fid: int) -> None:
        horizon = current_fid - self.params.buffer_capacity
        keep = self.unclaimed_fids > horizon
        if not keep.all():
            self.unclaimed_points = self.unclaimed_points[keep]
            self.unclaimed_fids = self.unclaimed_fids[keep]
        survivors = []
        for entry in self.trees:
            keep = entry.frame_ids > horizon
            if not keep.all():
                entry.points = entry.points[keep]
                entry.frame_ids = entry.frame_ids[keep]
                if len(entry.points) < self.params.cluster.min_cluster_size:
                    continue
                entry.model.centroid = entry.points.mean(axis=0)
                entry.model.point_count = len(entry.points)
            survivors.append(entry)
        self.trees = survivors


def update_map(pole_points_world: np.ndarray, cylinder_map: CylinderMap) -> CylinderMap:
    """Functional wrapper over CylinderMap.update (mutates and returns it)."""
    cylinder_map.update(pole_points_world)
    return cylinder_map


def export_map_csv(cylinder_map: CylinderMap) -> str:
    """One row per leaf cylinder: tree id, leaf path (L/H choices from the
    root), axis direction, axis point, radius, axial extent, fit rms."""
    out = io.StringIO()
    out.write("tree_id,leaf_path,ux,uy,uz,qx,qy,qz,r,extent_low,extent_high,fit_rms\n")

    def walk(node: CylNode, tree_id: int, path: str):
        if node.is_leaf:
            c = node.cylinder
            row = [
                str(tree_id),
                path or "-",
                *(f"{v:.9g}" for v in c.axis_dir),
                *(f"{v:.9g}" for v in c.axis_point),
                f"{c.radius:.9g}",
                f"{c.axial_extent[0]:.9g}",
                f"{c.axial_extent[1]:.9g}",
                f"{c.fit_rms:.9g}",
            ]
            out.write(",".join(row) + "\n")
            return
        walk(node.low, tree_id, path + "L")
        walk(node.high, tree_id, path + "H")

    for entry in cylinder_map.trees:
        walk(entry.model.root, entry.tree_id, "")
    return out.getvalue()
