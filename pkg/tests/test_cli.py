import json

import numpy as np
import pytest
from click.testing import CliRunner

from cli import cli
from data.grid import load_grid


@pytest.fixture
def invoke(tiny_yaml):
    runner = CliRunner()

    def run(out, *args):
        return runner.invoke(cli, ["--config", str(tiny_yaml), "--out", str(out), *args])

    return run


def _outputs(out):
    return json.loads((out / "manifest.json").read_text())["outputs"]


def test_simulate_writes_grid_series_and_manifest(tmp_path, invoke):
    result = invoke(tmp_path / "a", "simulate")
    assert result.exit_code == 0, result.output
    out = tmp_path / "a"
    for name in ("ground_truth.csv", "sensors.csv", "scenario.json", "manifest.json"):
        assert (out / name).exists()
    truth = load_grid(out / "ground_truth.csv")
    assert truth.speed.shape == (120, 8)
    assert sorted(_outputs(out)) == ["ground_truth.csv", "scenario.json", "sensors.csv"]


def test_simulate_is_reproducible(tmp_path, invoke):
    invoke(tmp_path / "a", "simulate")
    invoke(tmp_path / "b", "simulate")
    assert _outputs(tmp_path / "a") == _outputs(tmp_path / "b")


def test_bad_time_step_exits_nonzero(tmp_path, invoke):
    result = invoke(tmp_path / "bad", "--set", "scenario.dt=7", "simulate")
    assert result.exit_code == 1
    assert "integral multiple" in result.output


def test_missing_config_is_a_usage_error(tmp_path):
    result = CliRunner().invoke(cli, ["--config", str(tmp_path / "nope.yaml"), "simulate"])
    assert result.exit_code == 2


def test_ingest_aggregates_trajectories(tmp_path, invoke):
    path = tmp_path / "trajectories.csv"
    path.write_text("# units: length=m, speed=km/h, flow=veh/h\nvehicle_id,t,x,v\n1,0,0,72\n1,20,400,72\n")
    result = invoke(tmp_path / "ingest", "ingest", "--trajectories", str(path))
    assert result.exit_code == 0, result.output
    field = load_grid(tmp_path / "ingest" / "ground_truth.csv")
    np.testing.assert_allclose(field.speed, 72.0)
    assert field.flow[0].sum() > 0 and field.flow[10:].sum() == 0


def test_baseline_writes_report_and_heatmaps(tmp_path, invoke):
    result = invoke(tmp_path / "base", "baseline", "--method", "inter2d")
    assert result.exit_code == 0, result.output
    out = tmp_path / "base"
    report = json.loads((out / "report_inter2d.json").read_text())
    assert report["metadata"]["method"] == "inter2d"
    assert report["metadata"]["sensors"] == 4
    assert (out / "heatmap_inter2d_abs_error.csv").exists()


def test_sweep_writes_one_report_per_count(tmp_path, invoke):
    result = invoke(tmp_path / "sweep", "--set", "evaluation.sweep_counts=[2, 4]", "sweep", "--method", "as")
    assert result.exit_code == 0, result.output
    assert sorted(_outputs(tmp_path / "sweep")) == ["report_as_W2.json", "report_as_W4.json"]


def test_train_then_evaluate_and_estimate(tmp_path, invoke):
    out = tmp_path / "run"
    result = invoke(out, "train")
    assert result.exit_code == 0, result.output
    checkpoint = out / "model.ckpt"
    assert checkpoint.exists() and (out / "train_report.json").exists()

    result = invoke(out, "evaluate", "--checkpoint", str(checkpoint))
    assert result.exit_code == 0, result.output
    report = json.loads((out / "report.json").read_text())
    assert report["metadata"]["method"] == "extended"
    assert report["metrics"]["speed"]["rmse"] >= 0

    result = invoke(out, "estimate", "--checkpoint", str(checkpoint), "--sample", "99")
    assert result.exit_code == 2
    result = invoke(out, "estimate", "--checkpoint", str(checkpoint))
    assert result.exit_code == 0, result.output


def test_seed_changes_the_trained_weights(tmp_path, invoke):
    invoke(tmp_path / "a", "--seed", "1", "train")
    invoke(tmp_path / "b", "--seed", "2", "train")
    invoke(tmp_path / "c", "--seed", "1", "train")
    hashes = [_outputs(tmp_path / name)["model.ckpt"] for name in "abc"]
    assert hashes[0] == hashes[2] != hashes[1]


def test_train_rerun_is_byte_identical(tmp_path, invoke):
    for name in "ab":
        result = invoke(tmp_path / name, "train")
        assert result.exit_code == 0, result.output
    for artifact in ("model.ckpt", "train_report.json"):
        assert (tmp_path / "a" / artifact).read_bytes() == (tmp_path / "b" / artifact).read_bytes()
    assert _outputs(tmp_path / "a") == _outputs(tmp_path / "b")


def test_evaluate_rerun_is_byte_identical(tmp_path, invoke):
    invoke(tmp_path / "run", "train")
    checkpoint = tmp_path / "run" / "model.ckpt"
    for name in "ab":
        result = invoke(tmp_path / name, "evaluate", "--checkpoint", str(checkpoint))
        assert result.exit_code == 0, result.output
    first, second = tmp_path / "a", tmp_path / "b"
    assert (first / "report.json").read_bytes() == (second / "report.json").read_bytes()
    assert _outputs(first) == _outputs(second)
