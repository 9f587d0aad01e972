"""Run configuration: one JSON file with sim/ins/map/fusion/eval sections.

Every tunable default appears explicitly in the bundled configs so an
experiment file fully describes its run. Validation errors name the exact
field path.
"""

import dataclasses
import json
from dataclasses import dataclass
from importlib import resources

from .errors import ConfigError
from .geometry import RansacParams
from .ins import NoiseParams
from .mapping import ClusterParams, MapParams


@dataclass(frozen=True)
class SimSection:
    profile: str = "s_curve"
    duration_s: float = 60.0
    speed_mps: float = 1.5
    turn_radius_m: float = 10.0
    height_m: float = 1.2
    frame_period_s: float = 0.1
    points_per_frame: int = 1500
    range_noise_sigma_m: float = 0.005
    imu_rate_hz: float = 200.0
    corridor_length_m: float = 120.0
    corridor_half_width_m: float = 12.0
    n_trunks: int = 20
    curved_fraction: float = 0.3
    n_facades: int = 2
    leaf_blobs_per_trunk: int = 1
    leaf_density: float = 1.2
    n_dynamic: int = 2


@dataclass(frozen=True)
class InsSection:
    merge_frames: int = 5
    T_a_s: float = 3600.0
    T_g_s: float = 3600.0
    sigma_na: float = 1e-5
    sigma_ng: float = 1e-7
    sigma_ntheta: float = 5e-5
    sigma_nv: float = 5e-4
    gravity_mps2: float = 9.80665
    init_sigma_theta_rad: float = 1e-3
    init_sigma_pos_m: float = 1e-3
    init_sigma_vel_mps: float = 1e-2
    init_sigma_ba: float = 1e-2
    init_sigma_bg: float = 1e-3


@dataclass(frozen=True)
class MapSection:
    dbscan_eps_m: float = 0.3
    dbscan_min_pts: int = 5
    min_cluster_size: int = 30
    merge_radius_m: float = 0.5
    match_radius_m: float = 1.0
    init_frames: int = 3
    buffer_capacity_frames: int = 20
    refit_frac: float = 0.10
    refit_count: int = 50
    eps_max_m: float = 0.02
    d_max: int = 3
    ransac_inlier_tol_m: float = 0.03
    ransac_max_iters: int = 300
    ransac_min_inlier_frac: float = 0.6
    ransac_seed: int = 0


@dataclass(frozen=True)
class FusionSection:
    max_iterations: int = 5
    convergence_tol: float = 1e-6
    sigma_plane_m: float = 0.05
    sigma_c_floor_m2: float = 1e-6
    assoc_threshold_m: float = 1.0
    max_plane_points: int = 600
    max_pole_points: int = 400
    plane_map_voxel_m: float = 0.25
    plane_map_max_rms_m: float = 0.05
    plane_map_max_nn_dist_m: float = 1.0


@dataclass(frozen=True)
class EvalSection:
    rte_distances_m: tuple = (25.0, 100.0)
    assoc_max_dt_s: float = 0.01


@dataclass(frozen=True)
class RunConfig:
    name: str = "default"
    sim: SimSection = SimSection()
    ins: InsSection = InsSection()
    map: MapSection = MapSection()
    fusion: FusionSection = FusionSection()
    eval: EvalSection = EvalSection()

    def noise_params(self) -> NoiseParams:
        return NoiseParams(
            T_a=self.ins.T_a_s,
            T_g=self.ins.T_g_s,
            sigma_na=self.ins.sigma_na,
            sigma_ng=self.ins.sigma_ng,
            sigma_ntheta=self.ins.sigma_ntheta,
            sigma_nv=self.ins.sigma_nv,
            gravity_w=(0.0, 0.0, -self.ins.gravity_mps2),
        )

    def map_params(self, d_max: int | None = None) -> MapParams:
        m = self.map
        return MapParams(
            cluster=ClusterParams(
                dbscan_eps=m.dbscan_eps_m,
                dbscan_min_pts=m.dbscan_min_pts,
                min_cluster_size=m.min_cluster_size,
                merge_radius=m.merge_radius_m,
                match_radius=m.match_radius_m,
            ),
            init_frames=m.init_frames,
            buffer_capacity=m.buffer_capacity_frames,
            refit_frac=m.refit_frac,
            refit_count=m.refit_count,
            eps_max=m.eps_max_m,
            d_max=d_max if d_max is not None else m.d_max,
            ransac=RansacParams(
                inlier_tol=m.ransac_inlier_tol_m,
                max_iters=m.ransac_max_iters,
                min_inlier_frac=m.ransac_min_inlier_frac,
                seed=m.ransac_seed,
            ),
        )


_SECTIONS = {
    "sim": SimSection,
    "ins": InsSection,
    "map": MapSection,
    "fusion": FusionSection,
    "eval": EvalSection,
}


def _build_section(cls, payload: dict, path: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key in payload:
        if key not in fields:
            raise ConfigError(f"{path}.{key}: unknown field")
    kwargs = {}
    for key, value in payload.items():
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except TypeError as err:
        raise ConfigError(f"{path}: {err}") from err


def _validate(cfg: RunConfig) -> None:
    checks = [
        (cfg.sim.duration_s > 0, "sim.duration_s: must be > 0"),
        (cfg.sim.frame_period_s > 0, "sim.frame_period_s: must be > 0"),
        (cfg.sim.points_per_frame > 0, "sim.points_per_frame: must be > 0"),
        (cfg.sim.imu_rate_hz > 0, "sim.imu_rate_hz: must be > 0"),
        (cfg.sim.profile in ("straight", "circle", "s_curve"), f"sim.profile: unknown profile {cfg.sim.profile!r}"),
        (1 <= cfg.ins.merge_frames <= 6, "ins.merge_frames: must be within [1, 6]"),
        (cfg.ins.T_a_s > 0 and cfg.ins.T_g_s > 0, "ins.T_a_s/T_g_s: must be > 0"),
        (cfg.map.d_max >= 1, "map.d_max: must be >= 1"),
        (cfg.map.eps_max_m > 0, "map.eps_max_m: must be > 0"),
        (cfg.fusion.max_iterations >= 1, "fusion.max_iterations: must be >= 1"),
        (cfg.fusion.convergence_tol > 0, "fusion.convergence_tol: must be > 0"),
        (len(cfg.eval.rte_distances_m) > 0, "eval.rte_distances_m: must be non-empty"),
        (cfg.sim.duration_s >= cfg.ins.merge_frames * cfg.sim.frame_period_s,
         "sim.duration_s: run shorter than one merge buffer"),
    ]
    for ok, message in checks:
        if not ok:
            raise ConfigError(message)


def config_from_dict(payload: dict, name: str = "default") -> RunConfig:
    for key in payload:
        if key not in _SECTIONS and key != "name":
            raise ConfigError(f"{key}: unknown section (expected sim/ins/map/fusion/eval)")
    sections = {
        sec: _build_section(cls, payload.get(sec, {}), sec) for sec, cls in _SECTIONS.items()
    }
    cfg = RunConfig(name=payload.get("name", name), **sections)
    _validate(cfg)
    return cfg


def load_config(path: str) -> RunConfig:
    with open(path) as fh:
        text = fh.read()
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}:{err.lineno}:{err.colno}: {err.msg}") from err
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return config_from_dict(payload, name=path)


def config_to_dict(cfg: RunConfig) -> dict:
    out = {"name": cfg.name}
    for sec in _SECTIONS:
        out[sec] = dataclasses.asdict(getattr(cfg, sec))
        for k, v in out[sec].items():
            if isinstance(v, tuple):
                out[sec][k] = list(v)
    return out


def bundled_config(name: str) -> RunConfig:
    """Load one of the packaged experiment configs by bare name."""
    ref = resources.files("cylio.configs").joinpath(f"{name}.json")
    try:
        text = ref.read_text()
    except FileNotFoundError:
        raise ConfigError(f"no bundled config named {name!r}")
    return config_from_dict(json.loads(text), name=name)
