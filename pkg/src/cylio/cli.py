"""Command-line harness: dataset generation, pipeline runs in the three
ablation modes, metric reports, and the tree-depth sweep.

    cylio gen    --config C --seed S --out-dir D
    cylio run    --config C --seed S --mode M --out-dir D
    cylio eval   --out-dir D
    cylio sweep  --config C --seed S --out-dir D
    cylio all    --config C --seed S --out-dir D

The default config is the bundled "forest_curve" scenario. All artifacts
land under --out-dir: dataset/, runs/<label>/, reports/.
"""

import argparse
import os
import sys

from .config import ConfigError, RunConfig, bundled_config, load_config
from .evaluate import (
    PoseTrajectory,
    emit_report_csv,
    evaluate_run,
    load_trajectory_csv,
    save_trajectory_csv,
)
from .fusion import PipelineMode
from .mapping import export_map_csv
from .pipeline import RunResult, run_pipeline
from .sim.dataset import Dataset, generate_dataset, load_dataset, save_dataset

MODES = (PipelineMode.PLAIN, PipelineMode.FILTERED, PipelineMode.CYLINDERS)
SWEEP_DEPTHS = (1, 2, 3, 4)

DIAG_FIELDS = (
    "t", "mode", "iterations", "n_plane", "n_cyl",
    "obj_before", "obj_after", "diverged", "x", "y", "z",
)


def _load_config(args) -> RunConfig:
    if args.config:
        return load_config(args.config)
    return bundled_config("forest_curve")


def _dataset(args, cfg: RunConfig, generate_if_missing=True) -> Dataset:
    ds_dir = os.path.join(args.out_dir, "dataset")
    if os.path.isdir(ds_dir) and os.path.exists(os.path.join(ds_dir, "truth.csv")):
        return load_dataset(ds_dir, cfg.sim.frame_period_s)
    if not generate_if_missing:
        raise FileNotFoundError(f"no dataset under {ds_dir}; run `cylio gen` first")
    ds = generate_dataset(cfg, args.seed)
    save_dataset(ds, ds_dir)
    return ds


def _write_run(out_dir: str, label: str, result: RunResult) -> None:
    run_dir = os.path.join(out_dir, "runs", label)
    os.makedirs(run_dir, exist_ok=True)
    save_trajectory_csv(result.trajectory, os.path.join(run_dir, "trajectory.csv"))
    with open(os.path.join(run_dir, "diagnostics.csv"), "w") as fh:
        fh.write(",".join(DIAG_FIELDS) + "\n")
        for row in result.diagnostics:
            fields = []
            for key in DIAG_FIELDS:
                v = row[key]
                if isinstance(v, float):
                    fields.append(f"{v:.17g}")
                elif isinstance(v, bool):
                    fields.append("1" if v else "0")
                else:
                    fields.append(str(v))
            fh.write(",".join(fields) + "\n")
    with open(os.path.join(run_dir, "cylinder_map.csv"), "w") as fh:
        fh.write(export_map_csv(result.cylinder_map))


def _truth_trajectory(ds: Dataset) -> PoseTrajectory:
    return PoseTrajectory(ds.truth_t, ds.truth_R, ds.truth_p)


def _report_table(reports: dict, distances) -> str:
    lines = [f"{'run':<14} {'ATE[m]':>10} {'ARE[deg]':>10}"]
    for d in distances:
        lines[0] += f" {'RTE' + format(d, 'g') + '[m]':>12} {'RRE' + format(d, 'g') + '[deg]':>12}"
    for name, r in reports.items():
        row = f"{name:<14} {r.ate:>10.4f} {r.are:>10.4f}"
        for d in distances:
            if d in r.rte:
                row += f" {r.rte[d]:>12.4f} {r.rre[d]:>12.4f}"
            else:
                row += f" {'-':>12} {'-':>12}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def _evaluate_runs(out_dir: str, cfg: RunConfig, labels, report_name: str) -> int:
    ds_dir = os.path.join(out_dir, "dataset")
    truth = _truth_trajectory(load_dataset(ds_dir, cfg.sim.frame_period_s))
    distances = tuple(cfg.eval.rte_distances_m)
    reports = {}
    for label in labels:
        traj_path = os.path.join(out_dir, "runs", label, "trajectory.csv")
        if not os.path.exists(traj_path):
            print(f"skipping {label}: no trajectory at {traj_path}", file=sys.stderr)
            continue
        est = load_trajectory_csv(traj_path)
        reports[label] = evaluate_run(est, truth, distances)
    if not reports:
        print("nothing to evaluate", file=sys.stderr)
        return 1
    rep_dir = os.path.join(out_dir, "reports")
    os.makedirs(rep_dir, exist_ok=True)
    with open(os.path.join(rep_dir, f"{report_name}.csv"), "w") as fh:
        fh.write(emit_report_csv(reports))
    table = _report_table(reports, distances)
    with open(os.path.join(rep_dir, f"{report_name}.txt"), "w") as fh:
        fh.write(table)
    print(table, end="")
    return 0


def cmd_gen(args) -> int:
    cfg = _load_config(args)
    ds = generate_dataset(cfg, args.seed)
    save_dataset(ds, os.path.join(args.out_dir, "dataset"))
    n_pts = int(sum(len(f) for f in ds.frames))
    print(
        f"dataset '{cfg.name}' seed {args.seed}: {len(ds.frames)} frames, "
        f"{n_pts} points, {len(ds.imu_t)} IMU samples -> {args.out_dir}/dataset"
    )
    return 0


def cmd_run(args) -> int:
    cfg = _load_config(args)
    ds = _dataset(args, cfg)
    mode = PipelineMode(args.mode)
    result = run_pipeline(ds, cfg, mode)
    _write_run(args.out_dir, mode.value, result)
    print(f"run {mode.value}: {len(result.trajectory)} poses -> {args.out_dir}/runs/{mode.value}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    if not os.path.exists(os.path.join(args.out_dir, "dataset", "truth.csv")):
        print(f"no dataset under {args.out_dir}/dataset; run `cylio gen` first", file=sys.stderr)
        return 1
    runs_dir = os.path.join(args.out_dir, "runs")
    labels = sorted(os.listdir(runs_dir)) if os.path.isdir(runs_dir) else []
    return _evaluate_runs(args.out_dir, cfg, labels, "metrics")


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    ds = _dataset(args, cfg)
    for d in SWEEP_DEPTHS:
        result = run_pipeline(ds, cfg, PipelineMode.CYLINDERS, d_max=d)
        _write_run(args.out_dir, f"depth_{d}", result)
        print(f"sweep depth {d}: {len(result.trajectory)} poses")
    return _evaluate_runs(args.out_dir, cfg, [f"depth_{d}" for d in SWEEP_DEPTHS], "depth_sweep")


def cmd_all(args) -> int:
    cfg = _load_config(args)
    ds = generate_dataset(cfg, args.seed)
    save_dataset(ds, os.path.join(args.out_dir, "dataset"))
    for mode in MODES:
        result = run_pipeline(ds, cfg, mode)
        _write_run(args.out_dir, mode.value, result)
        print(f"run {mode.value}: {len(result.trajectory)} poses")
    rc = _evaluate_runs(args.out_dir, cfg, [m.value for m in MODES], "modes")
    for d in SWEEP_DEPTHS:
        result = run_pipeline(ds, cfg, PipelineMode.CYLINDERS, d_max=d)
        _write_run(args.out_dir, f"depth_{d}", result)
        print(f"sweep depth {d}: {len(result.trajectory)} poses")
    rc |= _evaluate_runs(args.out_dir, cfg, [f"depth_{d}" for d in SWEEP_DEPTHS], "depth_sweep")
    return rc


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="cylio",
        description="LiDAR-inertial odometry with cylinder landmarks: synthetic-data experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, mode=False):
        p.add_argument("--config", default=None, help="experiment JSON (default: bundled forest_curve)")
        p.add_argument("--seed", type=int, default=42)
        p.add_argument("--out-dir", default="cylio_out")
        if mode:
            p.add_argument(
                "--mode",
                default=PipelineMode.CYLINDERS.value,
                choices=[m.value for m in MODES],
            )

    common(sub.add_parser("gen", help="generate a dataset"))
    common(sub.add_parser("run", help="run the pipeline in one mode"), mode=True)
    common(sub.add_parser("eval", help="compute metrics for existing runs"))
    common(sub.add_parser("sweep", help="tree-depth sweep (1-4) in cylinders mode"))
    common(sub.add_parser("all", help="dataset + all modes + sweep + reports"))

    args = parser.parse_args(argv)
    handlers = {
        "gen": cmd_gen,
        "run": cmd_run,
        "eval": cmd_eval,
        "sweep": cmd_sweep,
        "all": cmd_all,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
