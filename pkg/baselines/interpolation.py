import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import pandas as pd

from data.domain import INPUT, Lattice
from data.grid import EstimateField
from data.samples import MeasurementWindow
from data.units import UnitSystem

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SensorSeries:
    """
    Observations on a sensor-time grid, the input of the data-driven baselines.

    Attributes:
        times: Observation instants (s), strictly increasing
        positions: Sensor positions (length units), strictly increasing
        speed: Array (len(times), len(positions))
        flow: Array (len(times), len(positions))
        units: Units of speed and flow
    """

    times: Tuple[float, ...]
    positions: Tuple[float, ...]
    speed: np.ndarray
    flow: np.ndarray
    units: UnitSystem

    def __post_init__(self):
        shape = (len(self.times), len(self.positions))
        for name in ("speed", "flow"):
            values = np.asarray(getattr(self, name), dtype=np.float64)
            if values.shape != shape:
                raise ValueError(f"{name} observations have shape {values.shape}, expected {shape}")
            object.__setattr__(self, name, values)
        for label, axis in (("times", self.times), ("positions", self.positions)):
            if np.any(np.diff(axis) <= 0):
                raise ValueError(f"Observation {label} must be strictly increasing")

    @classmethod
    def from_window(cls, window: MeasurementWindow, span: float, units: UnitSystem) -> "SensorSeries":
        """The H sensing rows of a raw window, ending at t0 + span."""
        if window.normalized:
            raise ValueError("Baselines read raw windows, got a normalized one")
        history = window.shape[0]
        end = window.t0 + span
        times = end - window.cadence * np.arange(history - 1, -1, -1)
        return cls(tuple(times), tuple(window.positions), window.speed, window.flow, units)

    @classmethod
    def from_frame(cls, frame: pd.DataFrame, units: UnitSystem, role: str = INPUT) -> "SensorSeries":
        """Pivot the long sensor frame (t, position, role, speed, flow) for one sensor role."""
        rows = frame[frame["role"] == role]
        speed = rows.pivot(index="t", columns="position", values="speed").sort_index().sort_index(axis=1)
        flow = rows.pivot(index="t", columns="position", values="flow").reindex_like(speed)
        return cls(
            tuple(speed.index.to_numpy(dtype=float)),
            tuple(speed.columns.to_numpy(dtype=float)),
            speed.to_numpy(),
            flow.to_numpy(),
            units,
        )


def _interp_grid(values: np.ndarray, times: np.ndarray, positions: np.ndarray, lattice: Lattice) -> np.ndarray:
    query_t = np.asarray(lattice.times, dtype=np.float64)
    query_x = np.asarray(lattice.positions, dtype=np.float64)
    # np.interp holds the end values outside the hull
    in_time = np.stack([np.interp(query_t, times, values[:, j]) for j in range(values.shape[1])], axis=1)
    return np.stack([np.interp(query_x, positions, row) for row in in_time])


def inter2d_estimate(series: SensorSeries, lattice: Lattice) -> EstimateField:
    """
    Bilinear interpolation on the sensor-time grid, each variable on its own.

    Args:
        series: Observations at >= 2 sensors and >= 2 instants
        lattice: Query positions and instants

    Returns:
        EstimateField; queries outside the observed hull take the nearest edge value
    """
    times = np.asarray(series.times, dtype=np.float64)
    positions = np.asarray(series.positions, dtype=np.float64)
    if len(positions) < 2:
        raise ValueError(f"Interpolation needs at least 2 sensors, got {len(positions)}")
    if len(times) < 2:
        raise ValueError(f"Interpolation needs at least 2 observation instants, got {len(times)}")
    return EstimateField(
        lattice=lattice,
        speed=_interp_grid(series.speed, times, positions, lattice),
        flow=_interp_grid(series.flow, times, positions, lattice),
        units=series.units,
    )
