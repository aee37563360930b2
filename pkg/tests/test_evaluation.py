import json
from dataclasses import replace

import numpy as np
import pytest

from commands.common import load_dataset
from data.domain import Lattice, SensorOverlapError
from data.grid import EstimateField, load_grid
from evaluation.harness import evaluate_method, inter2d_method, sensor_sensitivity_sweep
from evaluation.heatmap import export_heatmap
from evaluation.metrics import pointwise_re, re, rmse
from evaluation.report import EvalReport, error_histogram


def _oracle(truth):
    """A method that answers with the noise-free field itself."""

    def method(sample, lattice):
        rows = np.round(np.asarray(lattice.times) / truth.domain.dt).astype(int)
        cells = [truth.domain.cell_index(p) for p in lattice.positions]
        return EstimateField(
            lattice=lattice,
            speed=truth.speed[np.ix_(rows, cells)],
            flow=truth.flow[np.ix_(rows, cells)],
            units=truth.units,
        )

    return method


# =============================================================================
# Metrics
# =============================================================================


def test_rmse_and_re_values():
    assert rmse([1.0, 2.0, 3.0], [1.0, 2.0, 5.0]) == pytest.approx(np.sqrt(4.0 / 3.0))
    assert re([1.0, 2.0, 3.0], [1.0, 2.0, 5.0]) == pytest.approx(200.0 / np.sqrt(30.0))
    assert rmse([4.0], [4.0]) == 0.0


def test_metrics_match_direct_recomputation():
    rng = np.random.default_rng(11)
    truth = rng.uniform(0.5, 2.0, 1000)
    estimate = truth + rng.normal(0, 0.1, 1000)
    diff = estimate - truth
    assert rmse(estimate, truth) == pytest.approx(np.sqrt(np.sum(diff**2) / 1000), rel=1e-12)
    assert re(estimate, truth) == pytest.approx(100 * np.sqrt(np.sum(diff**2) / np.sum(truth**2)), rel=1e-12)


def test_re_is_scale_invariant():
    rng = np.random.default_rng(0)
    truth = rng.uniform(10, 100, 50)
    estimate = truth + rng.normal(0, 3, 50)
    assert re(estimate * 7.0, truth * 7.0) == pytest.approx(re(estimate, truth))


def test_metric_edge_cases():
    with pytest.raises(ValueError, match="all-zero"):
        re([1.0, 0.0], [0.0, 0.0])
    with pytest.raises(ValueError):
        rmse([1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        rmse([], [])
    np.testing.assert_array_equal(pointwise_re([0.0, 1.0, 11.0], [0.0, 0.0, 10.0]), [0.0, np.inf, 10.0])


def test_error_histogram_bins():
    frame = error_histogram([100.0, 105.0, 80.0, 160.0], [100.0, 100.0, 100.0, 100.0])
    assert len(frame) == 11
    assert list(frame["count"]) == [1, 1, 0, 0, 1, 0, 0, 0, 0, 0, 1]
    assert frame["low"].iloc[-1] == 50.0 and np.isinf(frame["high"].iloc[-1])
    assert frame["count"].sum() == 4


def test_report_json_is_sorted_with_null_for_undefined_values(tmp_path):
    estimates = {"speed": np.array([[1.0, 2.0], [1.0, 2.0]]), "flow": np.array([[3.0, 3.0], [3.0, 3.0]])}
    truths = {"speed": np.array([[1.0, 0.0], [1.0, 0.0]]), "flow": np.array([[3.0, 3.0], [3.0, 3.0]])}
    report = EvalReport.from_arrays(estimates, truths, [25.0, 75.0], {"method": "test", "sensors": 2})
    path = report.write(tmp_path / "report.json")
    text = path.read_text()
    loaded = json.loads(text)
    assert list(loaded) == sorted(loaded)
    assert loaded["metadata"]["points"] == 4
    assert loaded["per_sensor"][1]["speed_re"] is None
    assert loaded["per_sensor"][0]["speed_re"] == 0.0
    assert loaded["histograms"]["speed"][-1] == {"count": 2, "high": None, "low": 50.0}
    assert report.write(tmp_path / "again.json").read_text() == text
    assert "W=2" in report.summary()


# =============================================================================
# Harness
# =============================================================================


def test_perfect_oracle_scores_zero(tiny_dataset):
    report = evaluate_method(
        "oracle", _oracle(tiny_dataset.truth), tiny_dataset.test, tiny_dataset.layout, tiny_dataset.truth
    )
    assert report.metrics["speed"] == {"rmse": 0.0, "re": 0.0}
    assert report.metrics["flow"]["rmse"] == 0.0
    speed_counts = report.histograms["speed"]["count"]
    assert speed_counts.iloc[0] == speed_counts.sum() == report.metadata["points"]
    assert report.metadata["samples"] == len(tiny_dataset.test)
    assert report.metadata["sensors"] == 4


def test_window_reading_an_evaluation_sensor_is_rejected(tiny_dataset):
    sample = tiny_dataset.test[0]
    # 75 m is the centre of an evaluation cell
    leaky = replace(sample, window=replace(sample.window, positions=(25.0, 75.0, 275.0, 375.0)))
    with pytest.raises(SensorOverlapError, match="evaluation sensors"):
        evaluate_method("leaky", _oracle(tiny_dataset.truth), [leaky], tiny_dataset.layout, tiny_dataset.truth)


def test_evaluation_needs_test_samples(tiny_dataset):
    with pytest.raises(ValueError):
        evaluate_method("empty", _oracle(tiny_dataset.truth), [], tiny_dataset.layout, tiny_dataset.truth)


def test_sensor_sweep_keeps_evaluation_set(tiny_config, tiny_dataset):
    def run(layout):
        data = load_dataset(tiny_config, input_count=layout.n_inputs)
        assert tuple(data.layout.positions) == tuple(layout.positions)
        return evaluate_method("inter2d", inter2d_method(data.truth.units), data.test, data.layout, data.truth)

    reports = sensor_sensitivity_sweep(run, tiny_dataset.layout, [4, 2, 3])
    assert list(reports) == [2, 3, 4]
    assert [r.metadata["sensors"] for r in reports.values()] == [2, 3, 4]
    points = {r.metadata["points"] for r in reports.values()}
    assert len(points) == 1
    with pytest.raises(ValueError):
        sensor_sensitivity_sweep(run, tiny_dataset.layout, [5])
    with pytest.raises(ValueError):
        sensor_sensitivity_sweep(run, tiny_dataset.layout, [1])


# =============================================================================
# Heatmaps
# =============================================================================


def test_heatmap_round_trip(tmp_path, tiny_dataset):
    truth = tiny_dataset.truth
    domain = truth.domain
    lattice = Lattice(
        positions=tuple(float(c) for c in domain.cell_centers()),
        times=tuple(float(r * domain.dt) for r in range(10, 20)),
    )
    estimate = _oracle(truth)(None, lattice)
    paths = export_heatmap(estimate, truth, tmp_path / "heatmap")
    assert sorted(paths) == ["abs_error", "estimate", "truth"]
    assert paths["truth"].name == "heatmap_truth.csv"
    error = load_grid(paths["abs_error"])
    assert np.all(error.speed == 0.0) and np.all(error.flow == 0.0)
    np.testing.assert_array_equal(load_grid(paths["estimate"]).speed, truth.speed[10:20])


def test_heatmap_rejects_partial_lattices(tmp_path, tiny_dataset):
    truth = tiny_dataset.truth
    lattice = Lattice(positions=(75.0, 175.0), times=(0.0, 5.0))
    with pytest.raises(ValueError, match="cell centres"):
        export_heatmap(_oracle(truth)(None, lattice), truth, tmp_path / "bad")
