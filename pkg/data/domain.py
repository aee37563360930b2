from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from data.units import UnitSystem

INPUT = "input"
EVALUATION = "evaluation"


class SensorOverlapError(ValueError):
    """A sensor is used both as input and as evaluation ground truth."""

_INTEGRAL_TOL = 1e-9


def _integral_ratio(numerator: float, denominator: float, label: str) -> int:
    ratio = numerator / denominator
    count = int(round(ratio))
    if count < 1 or abs(ratio - count) > _INTEGRAL_TOL * max(1.0, ratio):
        raise ValueError(f"{label} must be an integral multiple of its step, got ratio {ratio}")
    return count


@dataclass(frozen=True)
class SpaceTimeDomain:
    """
    Road stretch [0, L] observed over [0, T] on a uniform lattice.

    Cells are indexed by j with centre (j + 0.5)·dx; lattice rows by k at
    instant k·dt, so a field has shape (n_times, n_cells).
    """

    length: float
    horizon: float
    dx: float
    dt: float
    units: UnitSystem = field(default_factory=UnitSystem)

    def __post_init__(self):
        for name in ("length", "horizon", "dx", "dt"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive, got {value}")
        _integral_ratio(self.length, self.dx, "length")
        _integral_ratio(self.horizon, self.dt, "horizon")

    @property
    def n_cells(self) -> int:
        return _integral_ratio(self.length, self.dx, "length")

    @property
    def n_times(self) -> int:
        return _integral_ratio(self.horizon, self.dt, "horizon")

    @property
    def shape(self) -> Tuple[int, int]:
        return self.n_times, self.n_cells

    def cell_centers(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.dx

    def times(self) -> np.ndarray:
        return np.arange(self.n_times) * self.dt

    def cell_index(self, position: float) -> int:
        """Index of the cell whose centre is at position; off-centre positions are rejected."""
        index = int(round(position / self.dx - 0.5))
        if index < 0 or index >= self.n_cells:
            raise ValueError(f"Sensor position {position} lies outside [0, {self.length}]")
        if abs((index + 0.5) * self.dx - position) > 1e-6 * self.dx:
            raise ValueError(
                f"Sensor position {position} is off-grid; cell centres are at (j + 0.5)*{self.dx}"
            )
        return index

    def to_dict(self) -> dict:
        return {
            "length": self.length,
            "horizon": self.horizon,
            "dx": self.dx,
            "dt": self.dt,
            "units": self.units.to_dict(),
        }


@dataclass(frozen=True)
class SensorLayout:
    """
    Ordered detector positions with a role per sensor.

    Input sensors feed the measurement windows; evaluation sensors are only
    ever read as ground truth.
    """

    positions: Tuple[float, ...]
    roles: Tuple[str, ...]

    def __post_init__(self):
        positions = np.asarray(self.positions, dtype=np.float64)
        if len(self.positions) != len(self.roles):
            raise ValueError("Every sensor position needs exactly one role")
        if np.any(np.diff(positions) <= 0):
            raise ValueError("Sensor positions must be strictly increasing")
        bad_roles = set(self.roles) - {INPUT, EVALUATION}
        if bad_roles:
            raise ValueError(f"Unknown sensor roles: {sorted(bad_roles)}")
        if self.roles.count(INPUT) < 2:
            raise ValueError("At least 2 input sensors are required")

    @classmethod
    def from_cells(
        cls, domain: SpaceTimeDomain, input_cells: Sequence[int], evaluation_cells: Sequence[int]
    ) -> "SensorLayout":
        overlap = set(input_cells) & set(evaluation_cells)
        if overlap:
            raise SensorOverlapError(f"Cells {sorted(overlap)} cannot be both input and evaluation sensors")
        tagged = sorted(
            [(int(c), INPUT) for c in input_cells] + [(int(c), EVALUATION) for c in evaluation_cells]
        )
        centers = domain.cell_centers()
        return cls(
            positions=tuple(float(centers[c]) for c, _ in tagged),
            roles=tuple(role for _, role in tagged),
        )

    @classmethod
    def evenly_spaced(
        cls,
        domain: SpaceTimeDomain,
        count: int,
        positions: Optional[Sequence[float]] = None,
        evaluation: Optional[Sequence[float]] = None,
    ) -> "SensorLayout":
        """
        Input sensors spread evenly over the cells (or at the given positions).
        Evaluation sensors sit at the given positions, or at every remaining cell.
        """
        if positions is not None:
            input_cells = [domain.cell_index(p) for p in positions]
        else:
            input_cells = even_subset(list(range(domain.n_cells)), count)
        if evaluation is not None:
            evaluation_cells = [domain.cell_index(p) for p in evaluation]
        else:
            evaluation_cells = [c for c in range(domain.n_cells) if c not in set(input_cells)]
        return cls.from_cells(domain, input_cells, evaluation_cells)

    def _select(self, role: str) -> np.ndarray:
        return np.array([p for p, r in zip(self.positions, self.roles) if r == role])

    @property
    def input_positions(self) -> np.ndarray:
        return self._select(INPUT)

    @property
    def evaluation_positions(self) -> np.ndarray:
        return self._select(EVALUATION)

    @property
    def n_inputs(self) -> int:
        return self.roles.count(INPUT)

    def input_cells(self, domain: SpaceTimeDomain) -> List[int]:
        return [domain.cell_index(p) for p in self.input_positions]

    def evaluation_cells(self, domain: SpaceTimeDomain) -> List[int]:
        return [domain.cell_index(p) for p in self.evaluation_positions]

    def with_input_count(self, count: int) -> "SensorLayout":
        """
        Keep `count` input sensors chosen evenly by position; evaluation sensors
        are carried over unchanged and dropped inputs leave the layout.
        """
        if count < 2:
            raise ValueError(f"Sensor count must be at least 2, got {count}")
        inputs = list(self.input_positions)
        if count > len(inputs):
            raise ValueError(f"Requested {count} input sensors but only {len(inputs)} exist")
        kept = even_subset(inputs, count)
        tagged = sorted([(p, INPUT) for p in kept] + [(p, EVALUATION) for p in self.evaluation_positions])
        return SensorLayout(
            positions=tuple(float(p) for p, _ in tagged), roles=tuple(r for _, r in tagged)
        )

    def to_dict(self) -> dict:
        return {"positions": list(self.positions), "roles": list(self.roles)}


def even_subset(items: Sequence, count: int) -> list:
    """Pick `count` items evenly spread over the sequence, keeping both ends."""
    if count > len(items):
        raise ValueError(f"Cannot pick {count} of {len(items)} items")
    indices = np.round(np.linspace(0, len(items) - 1, count)).astype(int)
    if len(set(indices.tolist())) != count:
        raise ValueError(f"Cannot pick {count} distinct items evenly from {len(items)}")
    return [items[i] for i in indices]


@dataclass(frozen=True)
class Lattice:
    """Physical query positions and instants; the estimate grid is len(times) x len(positions)."""

    positions: Tuple[float, ...]
    times: Tuple[float, ...]

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.times), len(self.positions)

    def normalized(self, length: float, t0: float, span: float) -> np.ndarray:
        """
        Query coordinates y = (x/L, (t - t0)/span) in row-major (time, space) order.

        Returns:
            Array of shape (n_times * n_positions, 2)
        """
        xs = np.asarray(self.positions, dtype=np.float64) / length
        ts = (np.asarray(self.times, dtype=np.float64) - t0) / span
        if np.any((xs < -1e-12) | (xs > 1 + 1e-12)) or np.any((ts < -1e-12) | (ts > 1 + 1e-12)):
            raise ValueError("Lattice lies outside the unit square of the estimation window")
        grid_t, grid_x = np.meshgrid(np.clip(ts, 0, 1), np.clip(xs, 0, 1), indexing="ij")
        return np.stack([grid_x.ravel(), grid_t.ravel()], axis=1)
