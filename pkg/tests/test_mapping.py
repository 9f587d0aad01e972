import numpy as np

from cylio.geometry import surface_residuals
from cylio.mapping import (
    ClusterParams,
    CylinderMap,
    MapParams,
    dbscan_cluster,
    export_map_csv,
    update_map,
)

# --- reference DBSCAN oracle ---------------------------------------------------

def reference_dbscan(points, eps, min_pts):
    """Independent DBSCAN: neighborhood graph via scipy sparse components
    over core points, border points to their lowest-index core neighbor."""
    from scipy.sparse import csr_matrix
    from scipy.sparse.csgraph import connected_components

    n = len(points)
    if n == 0:
        return np.full(0, -1, dtype=int)
    d2 = np.sum((points[:, None] - points[None, :]) ** 2, axis=2)
    adj = d2 <= eps * eps
    core = adj.sum(axis=1) >= min_pts
    labels = np.full(n, -1, dtype=int)
    core_idx = np.flatnonzero(core)
    if core_idx.size:
        sub = adj[np.ix_(core_idx, core_idx)]
        _, comp = connected_components(csr_matrix(sub), directed=False)
        # canonicalize component ids by first appearance (scan order)
        remap, next_id = {}, 0
        for c in comp:
            if c not in remap:
                remap[c] = next_id
                next_id += 1
        labels[core_idx] = [remap[c] for c in comp]
        for i in np.flatnonzero(~core):
            nbrs = np.flatnonzero(adj[i] & core)
            if nbrs.size:
                labels[i] = labels[nbrs[0]]
    return labels


def clusters_to_labels(n, clusters, noise):
    labels = np.full(n, -1, dtype=int)
    for cid, idx in enumerate(clusters):
        labels[idx] = cid
    return labels


# --- dbscan_cluster -------------------------------------------------------------

def test_dbscan_two_well_separated_groups(rng):
    a = np.array([0.0, 0.0, 0.0]) + 0.05 * rng.standard_normal((20, 3))
    b = np.array([5.0, 0.0, 0.0]) + 0.05 * rng.standard_normal((20, 3))
    clusters, noise = dbscan_cluster(np.vstack([a, b]), eps=0.3, min_pts=4)
    assert len(clusters) == 2
    assert len(noise) == 0
    assert {len(c) for c in clusters} == {20}


def test_dbscan_all_noise():
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.5, np.sqrt(3) / 2, 0]])
    clusters, noise = dbscan_cluster(pts, eps=0.3, min_pts=4)
    assert clusters == []
    assert len(noise) == 3


def test_dbscan_matches_reference(rng):
    for _ in range(50):
        n = int(rng.integers(10, 200))
        pts = rng.uniform(-3, 3, size=(n, 3))
        eps = float(rng.uniform(0.25, 0.8))
        min_pts = int(rng.integers(3, 7))
        clusters, noise = dbscan_cluster(pts, eps, min_pts)
        got = clusters_to_labels(n, clusters, noise)
        expected = reference_dbscan(pts, eps, min_pts)
        assert np.array_equal(got, expected)


def test_dbscan_uniform_fixture_against_reference(rng):
    pts = rng.uniform(-2, 2, size=(200, 3))
    clusters, noise = dbscan_cluster(pts, eps=0.4, min_pts=5)
    got = clusters_to_labels(200, clusters, noise)
    assert np.array_equal(got, reference_dbscan(pts, 0.4, 5))


# --- update_map -------------------------------------------------------------------

def trunk_cloud(center_xy, rng, n=60, radius=0.2, height=2.0):
    """Scan-like points on a trunk at the given ground position."""
    theta = rng.uniform(0, 2 * np.pi, n)
    z = rng.uniform(0.0, height, n)
    return np.column_stack(
        [
            center_xy[0] + radius * np.cos(theta),
            center_xy[1] + radius * np.sin(theta),
            z,
        ]
    ) + rng.normal(0, 0.005, (n, 3))


def quick_params(init_frames=1, min_cluster_size=30):
    return MapParams(
        cluster=ClusterParams(min_cluster_size=min_cluster_size),
        init_frames=init_frames,
    )


def test_two_separated_trunks_make_two_trees(rng):
    m = CylinderMap(quick_params())
    frame = np.vstack([trunk_cloud((0, 0), rng), trunk_cloud((6, 0), rng)])
    update_map(frame, m)
    assert len(m.trees) == 2
    ids = {e.tree_id for e in m.trees}
    assert ids == {0, 1}


def test_matched_points_grow_existing_tree(rng):
    m = CylinderMap(quick_params())
    m.update(trunk_cloud((0, 0), rng, n=60))
    assert len(m.trees) == 1
    before_count = m.trees[0].model.point_count
    before_fit = m.trees[0].points_at_last_fit
    m.update(trunk_cloud((0, 0), rng, n=60))  # within match radius
    assert len(m.trees) == 1
    assert m.trees[0].model.point_count > before_count
    assert m.trees[0].points_at_last_fit > before_fit  # refit happened


def test_noise_points_are_discarded(rng):
    m = CylinderMap(quick_params())
    trunks = [trunk_cloud((0, 0), rng), trunk_cloud((4, 0), rng), trunk_cloud((8, 0), rng)]
    iso = rng.uniform(-2, 2, (10, 3)) + np.array([20.0, 20.0, 0.0])
    iso *= np.array([3.0, 3.0, 1.0])  # spread out so no two are within eps
    m.update(np.vstack(trunks + [iso]))
    assert len(m.trees) == 3


def test_init_gate_buffers_frames(rng):
    m = CylinderMap(quick_params(init_frames=3))
    cloud = trunk_cloud((0, 0), rng, n=40)
    m.update(cloud)
    assert not m.initialized and len(m.trees) == 0
    m.update(trunk_cloud((0, 0), rng, n=40))
    assert not m.initialized and len(m.trees) == 0
    m.update(trunk_cloud((0, 0), rng, n=40))
    assert m.initialized
    assert len(m.trees) == 1  # pooled 120 points pass min_cluster_size


def test_update_idempotent_no_duplicate_trees(rng):
    m = CylinderMap(quick_params())
    frame = trunk_cloud((0, 0), rng, n=80)
    m.update(frame)
    n_trees = len(m.trees)
    m.update(frame)
    assert len(m.trees) == n_trees


def test_age_out_removes_stale_trees(rng):
    params = MapParams(
        cluster=ClusterParams(min_cluster_size=30),
        init_frames=1,
        buffer_capacity=5,
    )
    m = CylinderMap(params)
    m.update(trunk_cloud((0, 0), rng, n=60))
    assert len(m.trees) == 1
    for _ in range(6):
        m.update(np.zeros((0, 3)))
    assert len(m.trees) == 0


def test_empty_update_is_noop(rng):
    m = CylinderMap(quick_params())
    m.update(trunk_cloud((0, 0), rng, n=60))
    m.update(np.zeros((0, 3)))  # drains any pooled leftovers into the tree
    trees_before = len(m.trees)
    count_before = m.trees[0].model.point_count
    m.update(np.zeros((0, 3)))
    assert len(m.trees) == trees_before
    assert m.trees[0].model.point_count == count_before


def test_tree_models_satisfy_invariants(rng):
    m = CylinderMap(quick_params())
    for _ in range(4):
        m.update(np.vstack([trunk_cloud((0, 0), rng), trunk_cloud((5, 3), rng)]))
    for entry in m.trees:
        leaves = entry.model.root.leaves()
        assert 1 <= len(leaves) <= 2 ** (m.params.d_max - 1)
        assert all(l.depth <= m.params.d_max for l in leaves)
        assert entry.model.point_count == len(entry.points)
        resid = surface_residuals(entry.points, entry.model.root.cylinder)
        assert np.abs(resid).mean() < 0.05
    cxy = np.array([e.model.centroid[:2] for e in m.trees])
    d = np.linalg.norm(cxy[0] - cxy[1])
    assert d >= m.params.cluster.merge_radius


def test_map_deterministic(rng):
    frames = [
        np.vstack(
            [
                trunk_cloud((0, 0), np.random.default_rng(100 + k)),
                trunk_cloud((5, 1), np.random.default_rng(200 + k)),
            ]
        )
        for k in range(4)
    ]
    maps = []
    for _ in range(2):
        m = CylinderMap(quick_params())
        for f in frames:
            m.update(f)
        maps.append(m)
    assert export_map_csv(maps[0]) == export_map_csv(maps[1])


def test_export_csv_shape(rng):
    m = CylinderMap(quick_params())
    m.update(trunk_cloud((0, 0), rng, n=80))
    csv = export_map_csv(m)
    lines = csv.strip().split("\n")
    assert lines[0].startswith("tree_id,leaf_path,")
    assert len(lines) - 1 == sum(len(e.model.root.leaves()) for e in m.trees)
    fields = lines[1].split(",")
    assert len(fields) == 12
