import logging
from typing import Callable, Dict, Optional, Sequence

import numpy as np

from baselines.adaptive_smoothing import ASConfig, adaptive_smoothing_estimate
from baselines.interpolation import SensorSeries, inter2d_estimate
from baselines.pinn import PINNModel, pinn_field
from config.defaults import EVALUATION_DEFAULTS
from data.domain import Lattice, SensorLayout, SensorOverlapError
from data.grid import EstimateField, GroundTruthField
from data.samples import TrainSample
from data.units import UnitSystem
from evaluation.report import EvalReport
from models.operator import estimate_field

logger = logging.getLogger(__name__)

# (sample, lattice) -> estimate; only sample.window may be read
Method = Callable[[TrainSample, Lattice], EstimateField]


def operator_method(model) -> Method:
    return lambda sample, lattice: estimate_field(model, sample.window, lattice, sample.span)


def pinn_method(model: PINNModel) -> Method:
    return lambda sample, lattice: pinn_field(model, lattice)


def inter2d_method(units: UnitSystem) -> Method:
    return lambda sample, lattice: inter2d_estimate(
        SensorSeries.from_window(sample.window, sample.span, units), lattice
    )


def adaptive_smoothing_method(config: ASConfig, units: UnitSystem) -> Method:
    return lambda sample, lattice: adaptive_smoothing_estimate(
        SensorSeries.from_window(sample.window, sample.span, units), config, lattice
    )


def check_disjoint(layout: SensorLayout, truth: GroundTruthField) -> None:
    overlap = set(layout.input_cells(truth.domain)) & set(layout.evaluation_cells(truth.domain))
    if overlap:
        centers = truth.domain.cell_centers()
        raise SensorOverlapError(
            f"Sensors at {[float(centers[c]) for c in sorted(overlap)]} are both input and evaluation sensors"
        )
    if not len(layout.evaluation_positions):
        raise ValueError("The layout has no evaluation sensors")


def _guard_window(sample: TrainSample, layout: SensorLayout) -> None:
    """Input windows may only carry input-sensor columns."""
    columns = set(np.round(sample.window.positions, 9))
    leaked = columns & set(np.round(layout.evaluation_positions, 9))
    if leaked:
        raise SensorOverlapError(
            f"Window at t0={sample.t0:g}s reads evaluation sensors at {sorted(float(p) for p in leaked)}"
        )
    unknown = columns - set(np.round(layout.input_positions, 9))
    if unknown:
        raise SensorOverlapError(
            f"Window at t0={sample.t0:g}s reads sensors {sorted(float(p) for p in unknown)} outside the input set"
        )


def evaluation_lattice(sample: TrainSample, layout: SensorLayout, truth: GroundTruthField) -> Lattice:
    """Evaluation positions at every lattice instant of [t0, t0 + span]."""
    dt = truth.domain.dt
    rows = sample.anchor_row + np.arange(int(round(sample.span / dt)) + 1)
    return Lattice(
        positions=tuple(float(p) for p in layout.evaluation_positions),
        times=tuple(float(r * dt) for r in rows),
    )


def evaluate_method(
    name: str,
    method: Method,
    test_samples: Sequence[TrainSample],
    layout: SensorLayout,
    truth: GroundTruthField,
    metadata: Optional[dict] = None,
    bin_width: float = EVALUATION_DEFAULTS["bin_width"],
    overflow: float = EVALUATION_DEFAULTS["overflow"],
) -> EvalReport:
    """
    Score a method at the evaluation sensors over every test window.

    Args:
        name: Method name recorded in the report
        method: Estimator adapter; it only ever sees input-sensor windows
        test_samples: Test split
        layout: Sensor layout with disjoint input and evaluation sets
        truth: Noise-free field; read at evaluation cells only
        metadata: Extra report metadata (seed, scenario)

    Returns:
        EvalReport with metrics pooled over all samples and evaluation points
    """
    if not test_samples:
        raise ValueError("No test samples to evaluate")
    check_disjoint(layout, truth)
    cells = layout.evaluation_cells(truth.domain)
    dt = truth.domain.dt
    estimates = {"speed": [], "flow": []}
    truths = {"speed": [], "flow": []}
    for sample in test_samples:
        _guard_window(sample, layout)
        lattice = evaluation_lattice(sample, layout, truth)
        field = method(sample, lattice)
        if field.lattice != lattice:
            raise ValueError(f"{name} answered on a different lattice than requested")
        rows = np.round(np.asarray(lattice.times) / dt).astype(int)
        for variable in estimates:
            estimates[variable].append(getattr(field, variable))
            truths[variable].append(getattr(truth, variable)[np.ix_(rows, cells)])
    report = EvalReport.from_arrays(
        {k: np.concatenate(v) for k, v in estimates.items()},
        {k: np.concatenate(v) for k, v in truths.items()},
        layout.evaluation_positions,
        {"method": name, "sensors": layout.n_inputs, "samples": len(test_samples), **(metadata or {})},
        bin_width=bin_width,
        overflow=overflow,
    )
    logger.info(report.summary())
    return report


def sensor_sensitivity_sweep(
    run: Callable[[SensorLayout], EvalReport], layout: SensorLayout, counts: Sequence[int]
) -> Dict[int, EvalReport]:
    """
    Train and evaluate once per input-sensor count.

    Args:
        run: Full train + evaluate pipeline for one layout
        layout: Base layout; its evaluation sensors stay fixed for every count
        counts: Input sensor counts, each in [2, available inputs]

    Returns:
        Reports keyed by count, in ascending count order
    """
    for count in counts:
        if count < 2:
            raise ValueError(f"Sensor count must be at least 2, got {count}")
        if count > layout.n_inputs:
            raise ValueError(f"Requested {count} input sensors but only {layout.n_inputs} exist")
    evaluation = tuple(layout.evaluation_positions)
    reports = {}
    for count in sorted(set(counts)):
        reduced = layout.with_input_count(count)
        if tuple(reduced.evaluation_positions) != evaluation:
            raise RuntimeError("Reducing input sensors changed the evaluation set")
        logger.info("Sweep: %d input sensors", count)
        reports[count] = run(reduced)
    return reports
