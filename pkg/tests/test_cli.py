"""CLI surface tests on a tiny config."""

import json
import os

import pytest

from cylio.cli import main
from cylio.config import ConfigError, bundled_config, config_to_dict, load_config


@pytest.fixture(scope="module")
def tiny_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.json"
    payload = config_to_dict(bundled_config("forest_curve"))
    payload["name"] = "tiny"
    payload["sim"].update(
        duration_s=8.0,
        points_per_frame=600,
        n_trunks=6,
        corridor_length_m=25.0,
    )
    path.write_text(json.dumps(payload))
    return str(path)


def test_bundled_configs_load():
    for name in ("forest_curve", "tree_rich", "pole_free"):
        cfg = bundled_config(name)
        assert cfg.name == name


def test_zero_length_run_rejected(tmp_path):
    payload = config_to_dict(bundled_config("forest_curve"))
    payload["sim"]["duration_s"] = 0.0
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(ConfigError, match="sim.duration_s"):
        load_config(str(path))


def test_unknown_field_rejected(tmp_path):
    payload = {"sim": {"no_such_knob": 1}}
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(payload))
    with pytest.raises(ConfigError, match="sim.no_such_knob"):
        load_config(str(path))


def test_json_syntax_error_is_line_precise(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{\n "sim": {,}\n}\n')
    with pytest.raises(ConfigError, match=r":2:"):
        load_config(str(path))


def test_cli_config_error_exit_code(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"sim": {"duration_s": -1}}))
    rc = main(["gen", "--config", str(path), "--out-dir", str(tmp_path / "out")])
    assert rc == 2
    assert "config error" in capsys.readouterr().err


def test_cli_gen_run_eval(tiny_config, tmp_path, capsys):
    out = str(tmp_path / "out")
    assert main(["gen", "--config", tiny_config, "--seed", "9", "--out-dir", out]) == 0
    assert os.path.exists(os.path.join(out, "dataset", "truth.csv"))
    assert os.path.exists(os.path.join(out, "dataset", "scene.json"))
    assert os.path.exists(os.path.join(out, "dataset", "imu.csv"))

    assert main(["run", "--config", tiny_config, "--seed", "9", "--mode", "cylinders", "--out-dir", out]) == 0
    run_dir = os.path.join(out, "runs", "cylinders")
    for name in ("trajectory.csv", "diagnostics.csv", "cylinder_map.csv"):
        assert os.path.exists(os.path.join(run_dir, name))
    with open(os.path.join(run_dir, "trajectory.csv")) as fh:
        header = fh.readline().strip()
    assert header == "t,x,y,z,qw,qx,qy,qz"

    assert main(["eval", "--config", tiny_config, "--out-dir", out]) == 0
    assert os.path.exists(os.path.join(out, "reports", "metrics.csv"))
    table = capsys.readouterr().out
    assert "cylinders" in table


def test_cli_all_is_bitwise_deterministic(tiny_config, tmp_path):
    out_a = str(tmp_path / "a")
    out_b = str(tmp_path / "b")
    assert main(["all", "--config", tiny_config, "--seed", "7", "--out-dir", out_a]) == 0
    assert main(["all", "--config", tiny_config, "--seed", "7", "--out-dir", out_b]) == 0
    for rel_root, _, files in os.walk(out_a):
        for name in files:
            pa = os.path.join(rel_root, name)
            pb = pa.replace(out_a, out_b, 1)
            with open(pa, "rb") as fa, open(pb, "rb") as fb:
                assert fa.read() == fb.read(), f"{pa} differs"


def test_cli_all_artifacts(tiny_config, tmp_path):
    out = str(tmp_path / "out")
    assert main(["all", "--config", tiny_config, "--seed", "3", "--out-dir", out]) == 0
    for label in ("plain", "filtered", "cylinders", "depth_1", "depth_2", "depth_3", "depth_4"):
        assert os.path.exists(os.path.join(out, "runs", label, "trajectory.csv"))
    for rep in ("modes", "depth_sweep"):
        assert os.path.exists(os.path.join(out, "reports", f"{rep}.csv"))
        assert os.path.exists(os.path.join(out, "reports", f"{rep}.txt"))


def test_report_csv_parses_back(tiny_config, tmp_path):
    from cylio.evaluate import parse_report_csv

    out = str(tmp_path / "out")
    assert main(["all", "--config", tiny_config, "--seed", "3", "--out-dir", out]) == 0
    with open(os.path.join(out, "reports", "modes.csv")) as fh:
        reports = parse_report_csv(fh.read())
    assert set(reports) == {"plain", "filtered", "cylinders"}
    assert all(r.ate >= 0 for r in reports.values())
