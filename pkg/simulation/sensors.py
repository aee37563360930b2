from typing import Tuple

import numpy as np
import pandas as pd

from data.domain import SensorLayout
from data.grid import GroundTruthField

SERIES_COLUMNS = ["t", "position", "role", "speed", "flow"]


def _noisy(values: np.ndarray, std: float, rng: np.random.Generator) -> np.ndarray:
    if std == 0:
        return values.copy()
    return np.maximum(values + rng.normal(0.0, std, size=values.shape), 0.0)


def add_measurement_noise(
    field: GroundTruthField, layout: SensorLayout, noise: Tuple[float, float], seed: int
) -> GroundTruthField:
    """
    Copy of the field with seeded Gaussian noise on the input-sensor columns only.

    Args:
        field: Noise-free ground truth
        layout: Sensor layout; evaluation columns stay exact
        noise: (speed std, flow std) in dataset units
        seed: Noise seed

    Returns:
        The measured field, clamped non-negative
    """
    rng = np.random.default_rng(seed)
    cells = layout.input_cells(field.domain)
    speed, flow = np.array(field.speed), np.array(field.flow)
    speed[:, cells] = _noisy(speed[:, cells], noise[0], rng)
    flow[:, cells] = _noisy(flow[:, cells], noise[1], rng)
    return GroundTruthField(domain=field.domain, speed=speed, flow=flow)


def sample_sensors(
    field: GroundTruthField,
    layout: SensorLayout,
    cadence_steps: int = 1,
    noise: Tuple[float, float] = (0.0, 0.0),
    seed: int = 0,
) -> pd.DataFrame:
    """
    Per-sensor time series read at the sensor cells.

    Args:
        field: Field to read from
        layout: Every sensor (input and evaluation) is sampled
        cadence_steps: Sensing interval in lattice steps
        noise: (speed std, flow std) of additive Gaussian noise
        seed: Noise seed

    Returns:
        Long frame with columns t, position, role, speed, flow; rows sorted by
        sensor position, then time
    """
    if cadence_steps < 1:
        raise ValueError(f"Cadence must be a positive multiple of dt, got {cadence_steps} steps")
    domain = field.domain
    cells = [domain.cell_index(p) for p in layout.positions]
    rows = np.arange(0, domain.n_times, cadence_steps)
    rng = np.random.default_rng(seed)
    speed = _noisy(field.speed[np.ix_(rows, cells)], noise[0], rng)
    flow = _noisy(field.flow[np.ix_(rows, cells)], noise[1], rng)

    times = rows * domain.dt
    frames = [
        pd.DataFrame(
            {
                "t": times,
                "position": position,
                "role": role,
                "speed": speed[:, i],
                "flow": flow[:, i],
            }
        )
        for i, (position, role) in enumerate(zip(layout.positions, layout.roles))
    ]
    return pd.concat(frames, ignore_index=True)[SERIES_COLUMNS]
