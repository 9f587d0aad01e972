"""Synthetic world model: trunks, plane patches, leaf blobs, dynamic boxes.

The scene owns the packed primitive arrays consumed by the ray-casting
kernel plus the label/truth-id tables the renderer uses to annotate hits.
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from ..frames import SemanticClass

N_ARC_SLABS = 32  # tessellation of curved trunks into straight slabs


@dataclass(frozen=True)
class TrunkSpec:
    """One pole-like object rooted on the ground plane. arc_radius = inf
    means straight; a finite arc bends the trunk in the vertical plane at
    the given azimuth."""

    base: tuple
    height: float
    radius: float
    arc_radius: float = np.inf
    bend_azimuth: float = 0.0

    def __post_init__(self):
        assert 0.05 <= self.radius <= 0.5, f"trunk radius {self.radius} outside [0.05, 0.5]"
        assert 1.0 <= self.height <= 10.0, f"trunk height {self.height} outside [1, 10]"
        if np.isfinite(self.arc_radius):
            assert self.arc_radius >= 2.0 * self.height, "arc radius must be >= 2x height"

    def centerline(self, s: np.ndarray):
        """Points and tangents of the trunk axis at arc lengths s."""
        s = np.asarray(s, dtype=float)
        base = np.asarray(self.base, dtype=float)
        if not np.isfinite(self.arc_radius):
            tangent = np.tile([0.0, 0.0, 1.0], (len(s), 1))
            return base + np.outer(s, [0.0, 0.0, 1.0]), tangent
        bend = np.array([np.cos(self.bend_azimuth), np.sin(self.bend_azimuth), 0.0])
        ang = s / self.arc_radius
        pts = (
            base
            + np.outer(self.arc_radius * (1.0 - np.cos(ang)), bend)
            + np.outer(self.arc_radius * np.sin(ang), [0.0, 0.0, 1.0])
        )
        tangents = np.outer(np.sin(ang), bend) + np.outer(np.cos(ang), [0.0, 0.0, 1.0])
        return pts, tangents


@dataclass(frozen=True)
class RectPatch:
    """Bounded plane patch (ground or building facade)."""

    center: tuple
    normal: tuple
    u_axis: tuple
    half_u: float
    v_axis: tuple
    half_v: float
    label: int  # SemanticClass value

    def pack(self) -> np.ndarray:
        return np.concatenate(
            [self.center, self.normal, self.u_axis, [self.half_u], self.v_axis, [self.half_v]]
        )


@dataclass(frozen=True)
class LeafBlob:
    center: tuple
    radius: float
    density: float  # per-meter scatter extinction along a chord


@dataclass(frozen=True)
class DynamicBox:
    """Axis-aligned box ping-ponging along a horizontal direction."""

    center: tuple
    direction: tuple
    span: float
    speed: float
    phase: float
    half_extents: tuple


@dataclass
class Scene:
    trunks: list
    patches: list
    leaf_blobs: list
    boxes: list

    def packed(self):
        """Primitive arrays for the ray-cast kernel plus annotation tables:
        (rects, slabs, spheres, boxes, rect_labels, rect_ids, slab_ids,
        sphere_ids, box_ids). Truth ids are globally unique per object."""
        rects = (
            np.array([p.pack() for p in self.patches]).reshape(-1, 14)
            if self.patches
            else np.zeros((0, 14))
        )
        rect_labels = np.array([p.label for p in self.patches], dtype=np.int64)

        slab_rows, slab_ids = [], []
        next_id = len(self.patches)
        for k, trunk in enumerate(self.trunks):
            tid = next_id + k
            if not np.isfinite(trunk.arc_radius):
                base = np.asarray(trunk.base, dtype=float)
                slab_rows.append([*base, 0.0, 0.0, 1.0, trunk.radius, 0.0, trunk.height])
                slab_ids.append(tid)
                continue
            seg = trunk.height / N_ARC_SLABS
            mids = (np.arange(N_ARC_SLABS) + 0.5) * seg
            centers, tangents = trunk.centerline(mids)
            for c, a in zip(centers, tangents):
                # slight overlap hides the joints between consecutive slabs
                slab_rows.append([*c, *a, trunk.radius, -0.55 * seg, 0.55 * seg])
                slab_ids.append(tid)
        slabs = np.array(slab_rows).reshape(-1, 9) if slab_rows else np.zeros((0, 9))

        next_id += len(self.trunks)
        spheres = (
            np.array([[*b.center, b.radius, b.density] for b in self.leaf_blobs]).reshape(-1, 5)
            if self.leaf_blobs
            else np.zeros((0, 5))
        )
        sphere_ids = next_id + np.arange(len(self.leaf_blobs))

        next_id += len(self.leaf_blobs)
        boxes = (
            np.array(
                [
                    [*b.center, *b.direction, b.span, b.speed, b.phase, *b.half_extents]
                    for b in self.boxes
                ]
            ).reshape(-1, 12)
            if self.boxes
            else np.zeros((0, 12))
        )
        box_ids = next_id + np.arange(len(self.boxes))

        return (
            rects,
            slabs,
            spheres,
            boxes,
            rect_labels,
            np.arange(len(self.patches), dtype=np.int64),
            np.array(slab_ids, dtype=np.int64),
            sphere_ids.astype(np.int64),
            box_ids.astype(np.int64),
        )

    def to_json(self) -> str:
        def enc(obj):
            if isinstance(obj, float) and np.isinf(obj):
                return "inf"
            return obj

        payload = {
            "trunks": [asdict(t) for t in self.trunks],
            "patches": [asdict(p) for p in self.patches],
            "leaf_blobs": [asdict(b) for b in self.leaf_blobs],
            "boxes": [asdict(b) for b in self.boxes],
        }
        return json.dumps(payload, default=enc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "Scene":
        raw = json.loads(text)

        def dec(v):
            return np.inf if v == "inf" else v

        trunks = [
            TrunkSpec(
                base=tuple(t["base"]),
                height=t["height"],
                radius=t["radius"],
                arc_radius=dec(t["arc_radius"]),
                bend_azimuth=t["bend_azimuth"],
            )
            for t in raw["trunks"]
        ]
        patches = [
            RectPatch(
                center=tuple(p["center"]),
                normal=tuple(p["normal"]),
                u_axis=tuple(p["u_axis"]),
                half_u=p["half_u"],
                v_axis=tuple(p["v_axis"]),
                half_v=p["half_v"],
                label=p["label"],
            )
            for p in raw["patches"]
        ]
        blobs = [
            LeafBlob(center=tuple(b["center"]), radius=b["radius"], density=b["density"])
            for b in raw["leaf_blobs"]
        ]
        boxes = [
            DynamicBox(
                center=tuple(b["center"]),
                direction=tuple(b["direction"]),
                span=b["span"],
                speed=b["speed"],
                phase=b["phase"],
                half_extents=tuple(b["half_extents"]),
            )
            for b in raw["boxes"]
        ]
        return cls(trunks, patches, blobs, boxes)


@dataclass(frozen=True)
class SceneParams:
    """Knobs for procedural scene generation along a road corridor."""

    corridor_length: float = 120.0
    corridor_half_width: float = 12.0
    road_half_width: float = 2.5  # trunk-free strip around the path
    n_trunks: int = 20
    trunk_min_spacing: float = 2.0
    trunk_radius_range: tuple = (0.12, 0.35)
    trunk_height_range: tuple = (3.0, 7.0)
    curved_fraction: float = 0.3
    arc_radius_factor_range: tuple = (2.0, 4.0)  # x height
    n_facades: int = 2
    facade_offset: float = 10.0
    facade_height: float = 6.0
    facade_length: float = 25.0
    leaf_blobs_per_trunk: int = 1
    leaf_radius_range: tuple = (1.0, 2.0)
    leaf_density: float = 1.2
    n_dynamic: int = 2
    dynamic_speed_range: tuple = (0.4, 1.2)
    ground_margin: float = 30.0


def generate_scene(params: SceneParams, seed: int) -> Scene:
    """Deterministic scene from a seed: dart-throwing trunk placement along
    the corridor, optional facades, leaf blobs atop trunks, and boxes
    shuttling across the road."""
    rng = np.random.default_rng(seed)
    L = params.corridor_length

    ground = RectPatch(
        center=(L / 2, 0.0, 0.0),
        normal=(0.0, 0.0, 1.0),
        u_axis=(1.0, 0.0, 0.0),
        half_u=L / 2 + params.ground_margin,
        v_axis=(0.0, 1.0, 0.0),
        half_v=params.corridor_half_width + params.ground_margin,
        label=int(SemanticClass.GROUND),
    )
    patches = [ground]
    for k in range(params.n_facades):
        side = 1.0 if k % 2 == 0 else -1.0
        x = rng.uniform(0.25 * L, 0.9 * L)
        patches.append(
            RectPatch(
                center=(x, side * params.facade_offset, params.facade_height / 2),
                normal=(0.0, -side, 0.0),
                u_axis=(1.0, 0.0, 0.0),
                half_u=params.facade_length / 2,
                v_axis=(0.0, 0.0, 1.0),
                half_v=params.facade_height / 2,
                label=int(SemanticClass.BUILDING),
            )
        )

    trunks = []
    attempts = 0
    while len(trunks) < params.n_trunks and attempts < 4000:
        attempts += 1
        x = rng.uniform(5.0, L)
        side = 1.0 if rng.random() < 0.5 else -1.0
        y = side * rng.uniform(params.road_half_width + 0.8, params.corridor_half_width)
        if any(np.hypot(x - t.base[0], y - t.base[1]) < params.trunk_min_spacing for t in trunks):
            continue
        height = float(rng.uniform(*params.trunk_height_range))
        radius = float(rng.uniform(*params.trunk_radius_range))
        if rng.random() < params.curved_fraction:
            arc = height * float(rng.uniform(*params.arc_radius_factor_range))
            azim = float(rng.uniform(0, 2 * np.pi))
        else:
            arc, azim = np.inf, 0.0
        trunks.append(TrunkSpec((x, y, 0.0), height, radius, arc, azim))

    blobs = []
    for t in trunks:
        tops, _ = t.centerline(np.array([t.height]))
        for _ in range(params.leaf_blobs_per_trunk):
            r = float(rng.uniform(*params.leaf_radius_range))
            jitter = rng.uniform(-0.4, 0.4, 3) * np.array([1, 1, 0.5])
            center = tops[0] + jitter + np.array([0.0, 0.0, 0.3 * r])
            blobs.append(LeafBlob(tuple(center), r, params.leaf_density))

    boxes = []
    for k in range(params.n_dynamic):
        x = rng.uniform(0.2 * L, 0.9 * L)
        boxes.append(
            DynamicBox(
                center=(x, 0.0, 0.6),
                direction=(0.0, 1.0, 0.0),
                span=params.corridor_half_width * 0.7,
                speed=float(rng.uniform(*params.dynamic_speed_range)),
                phase=float(rng.uniform(0.0, 4.0 * params.corridor_half_width * 0.7)),
                half_extents=(0.5, 0.9, 0.6),
            )
        )

    return Scene(trunks, patches, blobs, boxes)
