import numpy as np
import pandas as pd
import pytest

from data.domain import Lattice, SensorLayout, SensorOverlapError, SpaceTimeDomain, even_subset
from data.grid import EstimateField, GridFormatError, GroundTruthField, load_grid, write_grid
from data.normalization import NormalizationStats, compute_stats, denormalize, normalize
from data.samples import build_samples, split_dataset
from data.trajectories import aggregate_trajectories
from data.units import UnitSystem

FEET = UnitSystem(length="ft", speed="ft/s", flow="veh/s")


def _field(n_times=6, n_cells=4, seed=0):
    rng = np.random.default_rng(seed)
    domain = SpaceTimeDomain(length=n_cells * 50.0, horizon=n_times * 5.0, dx=50.0, dt=5.0)
    return GroundTruthField(
        domain=domain,
        speed=rng.uniform(10, 100, size=domain.shape),
        flow=rng.uniform(100, 2000, size=domain.shape),
    )


# =============================================================================
# Domain and layout
# =============================================================================


def test_domain_rejects_non_integral_cells():
    with pytest.raises(ValueError, match="integral multiple"):
        SpaceTimeDomain(length=120.0, horizon=60.0, dx=50.0, dt=5.0)


def test_layout_overlap_is_rejected():
    domain = SpaceTimeDomain(length=400.0, horizon=60.0, dx=50.0, dt=5.0)
    with pytest.raises(SensorOverlapError):
        SensorLayout.from_cells(domain, [0, 3, 7], [3, 5])


def test_evenly_spaced_layout_keeps_ends_and_disjoint_sets():
    domain = SpaceTimeDomain(length=400.0, horizon=60.0, dx=50.0, dt=5.0)
    layout = SensorLayout.evenly_spaced(domain, 4)
    assert layout.input_cells(domain) == [0, 2, 5, 7]
    assert layout.evaluation_cells(domain) == [1, 3, 4, 6]


def test_with_input_count_keeps_evaluation_sensors():
    domain = SpaceTimeDomain(length=550.0, horizon=60.0, dx=50.0, dt=5.0)
    layout = SensorLayout.evenly_spaced(domain, 6, evaluation=[75.0, 275.0])
    reduced = layout.with_input_count(3)
    assert reduced.n_inputs == 3
    np.testing.assert_array_equal(reduced.evaluation_positions, layout.evaluation_positions)
    with pytest.raises(ValueError):
        layout.with_input_count(1)


def test_even_subset_rejects_too_many():
    assert even_subset(list(range(5)), 5) == [0, 1, 2, 3, 4]
    with pytest.raises(ValueError):
        even_subset([1, 2], 3)


def test_lattice_normalized_is_row_major():
    lattice = Lattice(positions=(0.0, 100.0), times=(10.0, 20.0, 30.0))
    coords = lattice.normalized(length=100.0, t0=10.0, span=20.0)
    assert coords.shape == (6, 2)
    np.testing.assert_allclose(coords[:2], [[0.0, 0.0], [1.0, 0.0]])
    np.testing.assert_allclose(coords[-1], [1.0, 1.0])
    with pytest.raises(ValueError):
        lattice.normalized(length=100.0, t0=20.0, span=20.0)


# =============================================================================
# Grid CSV
# =============================================================================


def test_grid_round_trip_is_bit_exact(tmp_path):
    field = _field()
    loaded = load_grid(write_grid(field, tmp_path / "grid.csv"))
    assert loaded.domain == field.domain
    np.testing.assert_array_equal(loaded.speed, field.speed)
    np.testing.assert_array_equal(loaded.flow, field.flow)


def test_grid_without_units_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("@speed\n1,2\n@flow\n1,2\n")
    with pytest.raises(GridFormatError, match="missing units"):
        load_grid(path)


def test_grid_missing_unit_tag(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# units: length=m, speed=km/h, dx=50, dt=5\n@speed\n1,2\n@flow\n1,2\n")
    with pytest.raises(GridFormatError, match="flow"):
        load_grid(path)


def test_grid_nan_names_block_and_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(
        "# units: length=m, speed=km/h, flow=veh/h, dx=50, dt=5\n"
        "@speed\n1,2\n3,4\n@flow\n1,2\n3,nan\n"
    )
    with pytest.raises(GridFormatError, match=r"@flow row 1"):
        load_grid(path)


@pytest.mark.parametrize(
    "flow_rows, message",
    [("1,2\n3,abc\n", r"@flow row 1 \(line 7\): cannot parse token 'abc'"), ("1,-2\n3,4\n", r"@flow row 0 .*negative")],
)
def test_grid_bad_cells_name_their_row(tmp_path, flow_rows, message):
    path = tmp_path / "bad.csv"
    path.write_text("# units: length=m, speed=km/h, flow=veh/h, dx=50, dt=5\n@speed\n1,2\n3,4\n@flow\n" + flow_rows)
    with pytest.raises(GridFormatError, match=message):
        load_grid(path)


def test_grid_ragged_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(
        "# units: length=m, speed=km/h, flow=veh/h, dx=50, dt=5\n@speed\n1,2\n3\n@flow\n1,2\n3,4\n"
    )
    with pytest.raises(GridFormatError, match="ragged"):
        load_grid(path)


# =============================================================================
# Trajectory aggregation
# =============================================================================


def _feet_domain(n_times=2):
    return SpaceTimeDomain(length=200.0, horizon=n_times * 5.0, dx=20.0, dt=5.0, units=FEET)


def test_single_vehicle_edie_values():
    # 40 ft/s crosses each 20 ft cell in 0.5 s inside the first 5 s step
    frame = pd.DataFrame({"vehicle_id": [1, 1], "t": [0.0, 5.0], "x": [0.0, 200.0], "v": [40.0, 40.0]})
    field = aggregate_trajectories(frame, _feet_domain())
    np.testing.assert_allclose(field.flow[0], 0.2)
    np.testing.assert_allclose(field.speed[0], 40.0)
    np.testing.assert_allclose(field.flow[1], 0.0)
    np.testing.assert_allclose(field.flow.sum() * 20.0 * 5.0, 200.0)


def test_empty_cells_take_earlier_neighbour_on_ties():
    frame = pd.DataFrame(
        {
            "vehicle_id": [1, 1, 2, 2],
            "t": [0.0, 5.0, 10.0, 15.0],
            "x": [0.0, 200.0, 0.0, 100.0],
            "v": [40.0, 40.0, 20.0, 20.0],
        }
    )
    field = aggregate_trajectories(frame, _feet_domain(n_times=3))
    np.testing.assert_allclose(field.speed[2, :5], 20.0)
    # row 1 is empty everywhere: rows 0 and 2 are equally near, row 0 wins
    np.testing.assert_allclose(field.speed[1], 40.0)
    np.testing.assert_allclose(field.flow[1], 0.0)
    np.testing.assert_allclose(field.speed[2, 5:], 40.0)


def test_flows_of_vehicles_superpose():
    vehicles = [
        (1, [0.0, 5.0], [0.0, 200.0]),
        (2, [1.0, 5.0], [0.0, 200.0]),
        (3, [5.0, 7.0, 10.0], [0.0, 80.0, 200.0]),
    ]
    rows = [(vid, t, x, 0.0) for vid, ts, xs in vehicles for t, x in zip(ts, xs)]
    together = aggregate_trajectories(rows, _feet_domain())
    separate = sum(
        aggregate_trajectories([r for r in rows if r[0] == vid], _feet_domain()).flow
        for vid, _, _ in vehicles
    )
    np.testing.assert_allclose(together.flow, separate)


def test_trajectory_outside_domain():
    frame = pd.DataFrame({"vehicle_id": [1, 1], "t": [0.0, 5.0], "x": [0.0, 250.0], "v": [50.0, 50.0]})
    with pytest.raises(ValueError, match="outside"):
        aggregate_trajectories(frame, _feet_domain())


# =============================================================================
# Samples, splits and normalization
# =============================================================================


def test_observed_points_cover_sensors_and_instants():
    field = _field(n_times=6, n_cells=4)
    layout = SensorLayout.from_cells(field.domain, [0, 3], [1])
    samples = build_samples(field, layout, history=2, collocation=0, stride=1, seed=0)
    sample = samples[0]
    assert sample.observed.shape == (4, 2)
    assert sample.collocation.shape == (0, 2)
    np.testing.assert_allclose(sample.observed[:, 1], [0.0, 0.0, 1.0, 1.0])
    np.testing.assert_array_equal(sample.window.speed, field.speed[np.ix_([0, 1], [0, 3])])
    assert len(samples) == 5


def test_insufficient_history():
    field = _field(n_times=3)
    layout = SensorLayout.from_cells(field.domain, [0, 3], [1])
    with pytest.raises(ValueError, match="Insufficient history"):
        build_samples(field, layout, history=4, collocation=2, stride=1, seed=0)


def test_collocation_draws_are_seeded():
    field = _field(n_times=8)
    layout = SensorLayout.from_cells(field.domain, [0, 3], [1])
    first = build_samples(field, layout, history=2, collocation=5, stride=2, seed=11)
    second = build_samples(field, layout, history=2, collocation=5, stride=2, seed=11)
    for a, b in zip(first, second):
        np.testing.assert_array_equal(a.collocation, b.collocation)
        assert np.all((a.collocation >= 0) & (a.collocation <= 1))


@pytest.mark.parametrize("count, expected", [(10, (7, 1, 2)), (20, (14, 2, 4))])
def test_chronological_split_sizes(count, expected):
    field = _field(n_times=count + 1)
    layout = SensorLayout.from_cells(field.domain, [0, 3], [1])
    samples = build_samples(field, layout, history=2, collocation=1, stride=1, seed=0)
    assert len(samples) == count
    train, val, test = split_dataset(list(reversed(samples)))
    assert (len(train), len(val), len(test)) == expected
    assert train[-1].t0 < val[0].t0 < test[0].t0


def test_split_needs_ten_samples():
    field = _field(n_times=6)
    layout = SensorLayout.from_cells(field.domain, [0, 3], [1])
    samples = build_samples(field, layout, history=2, collocation=1, stride=1, seed=0)
    with pytest.raises(ValueError, match="at least 10"):
        split_dataset(samples)


def test_normalization_round_trip():
    field = _field(n_times=8)
    layout = SensorLayout.from_cells(field.domain, [0, 3], [1])
    samples = build_samples(field, layout, history=3, collocation=1, stride=1, seed=0)
    stats = compute_stats(samples)
    window = samples[0].window
    scaled = normalize(window, stats)
    assert scaled.normalized
    restored = denormalize(scaled, stats)
    np.testing.assert_allclose(restored.speed, window.speed)
    np.testing.assert_allclose(restored.flow, window.flow)
    assert NormalizationStats.from_dict(stats.to_dict()) == stats


def test_field_normalization_round_trip():
    field = _field(n_times=9, n_cells=5, seed=4)
    stats = NormalizationStats(speed_mean=60.0, speed_std=25.0, flow_mean=1000.0, flow_std=400.0)
    scaled = normalize(field, stats)
    np.testing.assert_allclose(scaled.speed, (field.speed - 60.0) / 25.0)
    restored = denormalize(scaled, stats)
    assert isinstance(restored, GroundTruthField) and restored.domain == field.domain
    np.testing.assert_allclose(restored.speed, field.speed, rtol=1e-12)
    np.testing.assert_allclose(restored.flow, field.flow, rtol=1e-12)

    lattice = Lattice(positions=(25.0, 75.0), times=(0.0, 5.0, 10.0))
    estimate = EstimateField(lattice, field.speed[:3, :2], field.flow[:3, :2], field.units)
    back = denormalize(normalize(estimate, stats), stats)
    assert isinstance(back, EstimateField) and back.lattice == lattice
    np.testing.assert_allclose(back.flow, estimate.flow, rtol=1e-12)


def test_constant_training_data_has_zero_variance():
    domain = SpaceTimeDomain(length=200.0, horizon=40.0, dx=50.0, dt=5.0)
    field = GroundTruthField(domain, np.full(domain.shape, 50.0), np.full(domain.shape, 900.0))
    layout = SensorLayout.from_cells(domain, [0, 3], [1])
    samples = build_samples(field, layout, history=2, collocation=1, stride=1, seed=0)
    with pytest.raises(ValueError, match="zero variance"):
        compute_stats(samples)


def test_unit_conversions():
    metric = UnitSystem()
    assert metric.speed_factor == pytest.approx(1 / 3.6)
    assert metric.flow_factor == pytest.approx(1 / 3600)
    assert FEET.speed_factor == pytest.approx(1.0)
    assert float(FEET.speed_from_kmh(3.6)) == pytest.approx(1 / 0.3048)
    with pytest.raises(ValueError):
        UnitSystem(length="mi")
