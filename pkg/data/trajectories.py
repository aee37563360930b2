import logging
from pathlib import Path
from typing import Iterable, Tuple, Union

import numpy as np
import pandas as pd

from data.domain import SpaceTimeDomain
from data.grid import GridFormatError, GroundTruthField, _units_from_tags, _HEADER
from data.units import UnitSystem

logger = logging.getLogger(__name__)

TRAJECTORY_COLUMNS = ["vehicle_id", "t", "x", "v"]


def load_trajectories(path: Union[str, Path]) -> Tuple[pd.DataFrame, UnitSystem]:
    """
    Read a trajectory CSV: a units line, then `vehicle_id,t,x,v` with header.

    Returns:
        (trajectory frame, unit system of x and v)
    """
    path = Path(path)
    with path.open() as handle:
        first = handle.readline()
    match = _HEADER.match(first.strip())
    if match is None:
        raise GridFormatError("missing units: first line must be '# units: ...'")
    tags = dict(
        (part.strip() for part in item.split("=", 1))
        for item in match.group("body").split(",")
        if "=" in item
    )
    units, _ = _units_from_tags(tags, required=("length", "speed", "flow"))

    frame = pd.read_csv(path, skiprows=1)
    missing = [c for c in TRAJECTORY_COLUMNS if c not in frame.columns]
    if missing:
        raise GridFormatError(f"trajectory file lacks columns {missing}")
    return frame[TRAJECTORY_COLUMNS], units


def _as_frame(trajectories: Union[pd.DataFrame, Iterable[tuple]]) -> pd.DataFrame:
    if isinstance(trajectories, pd.DataFrame):
        frame = trajectories[TRAJECTORY_COLUMNS].copy()
    else:
        frame = pd.DataFrame(list(trajectories), columns=TRAJECTORY_COLUMNS)
    if frame.empty:
        raise ValueError("Empty trajectory set")
    frame[["t", "x", "v"]] = frame[["t", "x", "v"]].astype(np.float64)
    return frame


def _validate(frame: pd.DataFrame, domain: SpaceTimeDomain) -> None:
    values = frame[["t", "x", "v"]].to_numpy()
    if not np.all(np.isfinite(values)):
        raise ValueError("Trajectory samples contain non-finite values")
    outside_x = frame[(frame["x"] < 0) | (frame["x"] > domain.length)]
    if not outside_x.empty:
        row = outside_x.index[0]
        raise ValueError(f"Trajectory row {row}: position {frame.at[row, 'x']} outside [0, {domain.length}]")
    outside_t = frame[(frame["t"] < 0) | (frame["t"] > domain.horizon)]
    if not outside_t.empty:
        row = outside_t.index[0]
        raise ValueError(f"Trajectory row {row}: time {frame.at[row, 't']} outside [0, {domain.horizon}]")
    if (frame["v"] < 0).any():
        raise ValueError("Trajectory speeds must be non-negative")
    steps = frame.groupby("vehicle_id", sort=False)["t"].diff()
    if (steps <= 0).any():
        vehicle = frame.loc[steps <= 0, "vehicle_id"].iloc[0]
        raise ValueError(f"Samples of vehicle {vehicle} are not strictly time-ordered")


def _accumulate_segment(t0, x0, t1, x1, domain, distance, occupancy) -> None:
    """Split one linear piece at cell boundaries and add its distance and time per cell."""
    dt_seg, dx_seg = t1 - t0, x1 - x0
    cuts = [0.0, 1.0]
    k_lo, k_hi = sorted((t0 / domain.dt, t1 / domain.dt))
    cuts += [(k * domain.dt - t0) / dt_seg for k in range(int(np.floor(k_lo)) + 1, int(np.ceil(k_hi)))]
    if dx_seg != 0:
        j_lo, j_hi = sorted((x0 / domain.dx, x1 / domain.dx))
        cuts += [(j * domain.dx - x0) / dx_seg for j in range(int(np.floor(j_lo)) + 1, int(np.ceil(j_hi)))]
    cuts = np.unique(np.clip(cuts, 0.0, 1.0))
    for s_a, s_b in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (s_a + s_b)
        k = min(int((t0 + mid * dt_seg) / domain.dt), domain.n_times - 1)
        j = min(int((x0 + mid * dx_seg) / domain.dx), domain.n_cells - 1)
        distance[k, j] += abs(dx_seg) * (s_b - s_a)
        occupancy[k, j] += dt_seg * (s_b - s_a)


def _fill_empty_cells(speed: np.ndarray, occupied: np.ndarray) -> int:
    """Nearest temporal neighbour per column, earlier instant on ties. Returns the fill count."""
    filled = 0
    for j in range(speed.shape[1]):
        rows = np.flatnonzero(occupied[:, j])
        if rows.size == 0:
            raise ValueError(f"Cell column {j} has no trajectory data to fill from")
        for k in np.flatnonzero(~occupied[:, j]):
            gaps = np.abs(rows - k)
            speed[k, j] = speed[rows[np.argmin(gaps)], j]
            filled += 1
    return filled


def aggregate_trajectories(
    trajectories: Union[pd.DataFrame, Iterable[tuple]], domain: SpaceTimeDomain
) -> GroundTruthField:
    """
    Aggregate vehicle trajectories into a flow/speed field with Edie's definitions.

    Args:
        trajectories: Frame (or iterable of tuples) with vehicle_id, t, x, v in the
            domain's units; lanes are pooled
        domain: Target lattice

    Returns:
        GroundTruthField with flow = distance / (dx·dt) and speed = distance / time per cell

    Notes:
        - Consecutive samples of a vehicle are joined by straight lines and split
          at every cell boundary, so column sums of flow·dx·dt equal the total
          distance travelled exactly
        - Cells no vehicle visits take the speed of the nearest visited instant in
          the same column (earlier wins ties) and zero flow
    """
    frame = _as_frame(trajectories)
    _validate(frame, domain)

    distance = np.zeros(domain.shape)
    occupancy = np.zeros(domain.shape)
    for _, vehicle in frame.groupby("vehicle_id", sort=False):
        ts, xs = vehicle["t"].to_numpy(), vehicle["x"].to_numpy()
        for i in range(len(ts) - 1):
            _accumulate_segment(ts[i], xs[i], ts[i + 1], xs[i + 1], domain, distance, occupancy)

    occupied = occupancy > 0
    flow = distance / (domain.dx * domain.dt)
    speed = np.divide(distance, occupancy, out=np.zeros(domain.shape), where=occupied)
    filled = _fill_empty_cells(speed, occupied)
    if filled:
        logger.info("Filled %d empty cells from temporal neighbours", filled)

    units = domain.units
    return GroundTruthField(
        domain=domain,
        speed=units.speed_from_internal(speed),
        flow=units.flow_from_internal(flow),
    )
