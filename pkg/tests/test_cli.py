"""Tests for the command-line interface: config handling, artifacts, exit codes."""

import json
import shutil
import subprocess

import numpy as np
import pytest

from uwbnav.cli import main
from uwbnav.sim import default_anchors
from uwbnav.tdoa import synthesize_tdoa


def run_cli(capsys, argv):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def write_anchor_file(path, anchors=None):
    anchors = anchors if anchors is not None else default_anchors()
    payload = {
        "anchors": [{"id": a.id, "pos": [float(x) for x in a.pos]} for a in anchors.anchors]
    }
    path.write_text(json.dumps(payload))
    return path


@pytest.fixture(scope="module")
def exported_dataset(tmp_path_factory):
    """A short static-scenario dataset exported through the CLI itself."""
    out = tmp_path_factory.mktemp("export")
    code = main(
        [
            "sim",
            "--scenario",
            "static",
            "--out",
            str(out),
            "--set",
            "sim.duration=2",
            "--set",
            "sim.export_dataset=true",
        ]
    )
    assert code == 0
    return out / "dataset"


# --- argument parsing ---------------------------------------------------------------


def test_no_subcommand_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 2


def test_unknown_scenario_choice_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sim", "--scenario", "loop"])
    assert exc.value.code == 2


def test_sim_requires_a_scenario(capsys, tmp_path):
    code, _, err = run_cli(capsys, ["sim", "--out", str(tmp_path)])
    assert code == 2
    assert "no scenario selected" in err


@pytest.mark.parametrize(
    "override, fragment",
    [
        ("sim.duration", "key=value"),  # no '=' at all
        ("sim.durations=2", "unknown config key"),
        ("sim=3", "config section"),
    ],
)
def test_sim_rejects_malformed_overrides(capsys, tmp_path, override, fragment):
    code, _, err = run_cli(
        capsys, ["sim", "--scenario", "static", "--out", str(tmp_path), "--set", override]
    )
    assert code == 2
    assert fragment in err


def test_sim_rejects_nonpositive_run_count(capsys, tmp_path):
    code, _, err = run_cli(
        capsys, ["sim", "--scenario", "static", "--runs", "0", "--out", str(tmp_path)]
    )
    assert code == 2
    assert "runs" in err


# --- sim command ----------------------------------------------------------------------


def test_sim_writes_artifacts_and_summary(capsys, tmp_path):
    code, out, _ = run_cli(
        capsys,
        ["sim", "--scenario", "static", "--out", str(tmp_path), "--set", "sim.duration=2"],
    )
    assert code == 0
    assert "sim static seed=0" in out
    assert (tmp_path / "metrics.csv").exists()
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["scenario"] == "static"
    assert summary["duration"] == 2.0
    assert summary["steps"] == 200


def test_sim_artifacts_are_bit_reproducible(capsys, tmp_path):
    argv = ["sim", "--scenario", "static", "--set", "sim.duration=2"]
    assert main(argv + ["--out", str(tmp_path / "a")]) == 0
    assert main(argv + ["--out", str(tmp_path / "b")]) == 0
    capsys.readouterr()
    for name in ("metrics.csv", "summary.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_sim_parallel_runs_match_serial_runs(capsys, tmp_path):
    base = ["sim", "--scenario", "static", "--runs", "3", "--set", "sim.duration=2"]
    assert main(base + ["--out", str(tmp_path / "serial")]) == 0
    assert main(base + ["--jobs", "3", "--out", str(tmp_path / "parallel")]) == 0
    capsys.readouterr()
    for seed in range(3):
        sub = f"seed-{seed:04d}"
        assert (tmp_path / "serial" / sub / "metrics.csv").read_bytes() == (
            tmp_path / "parallel" / sub / "metrics.csv"
        ).read_bytes()
    # the multi-run roll-up summary is identical too
    assert (tmp_path / "serial" / "summary.json").read_bytes() == (
        tmp_path / "parallel" / "summary.json"
    ).read_bytes()


def test_config_file_merges_and_cli_overrides_win(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sim": {"scenario": "static", "duration": 2.0}}))
    code, _, _ = run_cli(
        capsys,
        [
            "sim",
            "--config",
            str(cfg),
            "--out",
            str(tmp_path / "out"),
            "--set",
            "sim.duration=1",
        ],
    )
    assert code == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["duration"] == 1.0  # --set applied after the config file
    assert summary["steps"] == 100


@pytest.mark.parametrize(
    "content, fragment",
    [
        (None, "not found"),
        ("{not json", "not valid JSON"),
        ("[1, 2]", "JSON object"),
        ('{"simulation": {}}', "unknown config key"),
    ],
)
def test_config_file_errors_are_usage_errors(capsys, tmp_path, content, fragment):
    cfg = tmp_path / "cfg.json"
    if content is not None:
        cfg.write_text(content)
    code, _, err = run_cli(
        capsys, ["sim", "--scenario", "static", "--config", str(cfg), "--out", str(tmp_path)]
    )
    assert code == 2
    assert fragment in err


# --- tdoa-solve command ----------------------------------------------------------------


def test_tdoa_solve_recovers_a_known_position(capsys, tmp_path):
    anchors_path = write_anchor_file(tmp_path / "anchors.json")
    d = synthesize_tdoa([1.0, 2.0, 0.5], None, default_anchors()).d
    code, out, _ = run_cli(
        capsys,
        [
            "tdoa-solve",
            "--anchors",
            str(anchors_path),
            "--d",
            ",".join(repr(float(x)) for x in d),
        ],
    )
    assert code == 0
    position_line = next(line for line in out.splitlines() if line.startswith("position:"))
    recovered = json.loads(position_line.split(":", 1)[1])
    np.testing.assert_allclose(recovered, [1.0, 2.0, 0.5], atol=1e-8)
    assert "residual:" in out


def test_tdoa_solve_degenerate_geometry_is_a_runtime_failure(capsys, tmp_path):
    anchors_path = write_anchor_file(tmp_path / "anchors.json")
    code, _, err = run_cli(
        capsys, ["tdoa-solve", "--anchors", str(anchors_path), "--d", ",".join(["0.0"] * 8)]
    )
    assert code == 3
    assert "degenerate geometry" in err
    assert "rank 3" in err


def test_tdoa_solve_rejects_bad_inputs(capsys, tmp_path):
    code, _, err = run_cli(
        capsys, ["tdoa-solve", "--anchors", str(tmp_path / "nope.json"), "--d", "0,0,0"]
    )
    assert code == 2 and "not found" in err

    few = default_anchors().anchors[:3]
    payload = {"anchors": [{"id": a.id, "pos": [float(x) for x in a.pos]} for a in few]}
    bad = tmp_path / "three.json"
    bad.write_text(json.dumps(payload))
    code, _, err = run_cli(capsys, ["tdoa-solve", "--anchors", str(bad), "--d", "0,0,0"])
    assert code == 2 and "4 anchors" in err

    anchors_path = write_anchor_file(tmp_path / "anchors.json")
    code, _, err = run_cli(
        capsys, ["tdoa-solve", "--anchors", str(anchors_path), "--d", "0.1,abc,0.3"]
    )
    assert code == 2 and "comma-separated" in err


# --- validate-gains command --------------------------------------------------------------


def test_validate_gains_passes_inside_the_bound(capsys):
    code, out, _ = run_cli(capsys, ["validate-gains", "--delta", "0.01"])
    assert code == 0
    assert out.startswith("PASS")
    assert "bound=0.028169014084507043" in out
    assert "Q4 eigenvalues" in out and "Q6 eigenvalues" in out


def test_validate_gains_fails_outside_the_bound(capsys):
    code, out, _ = run_cli(capsys, ["validate-gains", "--delta", "0.05"])
    assert code == 3
    assert out.startswith("FAIL")
    assert "certificate failed" in out


# --- replay command ------------------------------------------------------------------------


def test_replay_cli_runs_an_exported_dataset(capsys, tmp_path, exported_dataset):
    ds = exported_dataset
    code, out, _ = run_cli(
        capsys,
        [
            "replay",
            "--out",
            str(tmp_path),
            "--set",
            f"replay.imu={ds}/imu.csv",
            "--set",
            f"replay.uwb={ds}/uwb.csv",
            "--set",
            f"replay.gt={ds}/gt.csv",
            "--set",
            f"replay.anchors={ds}/anchors.json",
            "--set",
            "replay.tag_offset=[0,0,0]",
        ],
    )
    assert code == 0
    assert "replay: 200 steps" in out
    assert "initial pos err 4.644" in out
    assert (tmp_path / "metrics.csv").exists()
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["steps"] == 200
    assert summary["gt_records"] == 201


def test_replay_cli_requires_dataset_paths(capsys, tmp_path):
    code, _, err = run_cli(capsys, ["replay", "--out", str(tmp_path)])
    assert code == 2
    assert "imu, uwb, gt" in err


def test_replay_cli_rejects_unknown_column_map_key(capsys, tmp_path, exported_dataset):
    ds = exported_dataset
    cfg = tmp_path / "cfg.json"
    cfg.write_text(
        json.dumps(
            {
                "replay": {
                    "imu": f"{ds}/imu.csv",
                    "uwb": f"{ds}/uwb.csv",
                    "gt": f"{ds}/gt.csv",
                    "column_map": {"imu": {"bogus": "x"}},
                }
            }
        )
    )
    code, _, err = run_cli(capsys, ["replay", "--config", str(cfg), "--out", str(tmp_path)])
    assert code == 2
    assert "bogus" in err


# --- environment / entry point -------------------------------------------------------------


@pytest.mark.parametrize("level", ["BOGUS", "DEBUG"])
def test_log_level_env_var_is_forgiving(capsys, monkeypatch, level):
    monkeypatch.setenv("NAV_LOG", level)
    code, out, _ = run_cli(capsys, ["validate-gains", "--delta", "0.01"])
    assert code == 0
    assert "PASS" in out


def test_console_script_is_installed():
    exe = shutil.which("uwbnav")
    assert exe is not None
    proc = subprocess.run(
        [exe, "validate-gains", "--delta", "0.01"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "PASS" in proc.stdout
