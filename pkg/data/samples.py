import logging
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from data.domain import SensorLayout
from data.grid import GroundTruthField

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MeasurementWindow:
    """
    The operator input: H sensing rows of speed and flow at the W input sensors.

    Attributes:
        t0: Start of the estimation window (s)
        speed: Array (H, W), time ascending
        flow: Array (H, W)
        cadence: Sensing interval (s)
        positions: Input sensor positions (length units), ascending
        normalized: True once z-scored; raw windows must be non-negative
    """

    t0: float
    speed: np.ndarray
    flow: np.ndarray
    cadence: float
    positions: Tuple[float, ...]
    normalized: bool = False

    def __post_init__(self):
        speed = np.asarray(self.speed, dtype=np.float64)
        flow = np.asarray(self.flow, dtype=np.float64)
        if speed.shape != flow.shape or speed.ndim != 2:
            raise ValueError(f"Window grids must share one 2-D shape, got {speed.shape} and {flow.shape}")
        if speed.shape[1] != len(self.positions):
            raise ValueError(f"Window has {speed.shape[1]} columns but {len(self.positions)} sensors")
        if not (np.all(np.isfinite(speed)) and np.all(np.isfinite(flow))):
            raise ValueError("Window contains missing or non-finite cells")
        if not self.normalized and (np.any(speed < 0) or np.any(flow < 0)):
            raise ValueError("Raw window speeds and flows must be non-negative")
        object.__setattr__(self, "speed", speed)
        object.__setattr__(self, "flow", flow)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.speed.shape


@dataclass(frozen=True)
class TrainSample:
    """
    One operator training example.

    Attributes:
        window: The measurement window u
        span: Length of the estimation window [t0, t0 + span] (s)
        collocation: (P, 2) normalized coordinates for the physics loss
        observed: (R, 2) normalized coordinates of input-sensor/sensing-instant pairs
        observed_speed: (R,) measured speeds at the observed points
        observed_flow: (R,) measured flows at the observed points
        anchor_row: Lattice row of t0
    """

    window: MeasurementWindow
    span: float
    collocation: np.ndarray
    observed: np.ndarray
    observed_speed: np.ndarray
    observed_flow: np.ndarray
    anchor_row: int = 0

    @property
    def t0(self) -> float:
        return self.window.t0

    def with_collocation(self, points: np.ndarray) -> "TrainSample":
        return replace(self, collocation=np.asarray(points, dtype=np.float64).reshape(-1, 2))


def draw_collocation(rng: np.random.Generator, count: int) -> np.ndarray:
    """Uniform i.i.d. points in the unit square, shape (count, 2)."""
    if count < 0:
        raise ValueError(f"Collocation count must be non-negative, got {count}")
    return rng.uniform(0.0, 1.0, size=(count, 2))


def window_rows(anchor_row: int, history: int, cadence_steps: int, window_steps: int) -> np.ndarray:
    """Lattice rows of the H sensing instants ending at the end of the estimation window."""
    end = anchor_row + window_steps * cadence_steps
    return end - cadence_steps * np.arange(history - 1, -1, -1)


def build_samples(
    field: GroundTruthField,
    layout: SensorLayout,
    history: int,
    collocation: int,
    stride: int,
    seed: int,
    cadence_steps: int = 1,
    window_steps: Optional[int] = None,
    measured: Optional[GroundTruthField] = None,
) -> List[TrainSample]:
    """
    Cut a field into operator training samples.

    Args:
        field: Ground truth over the full lattice
        layout: Sensor layout; only input sensors are read
        history: H, sensing rows per window
        collocation: P, collocation points per sample
        stride: Lattice rows between consecutive anchors
        seed: Seed of the collocation draws
        cadence_steps: Sensing interval in lattice steps
        window_steps: Sensing intervals spanned by the estimation window (default H - 1)
        measured: Noisy sensor field to read windows and observations from (default field)

    Returns:
        Samples in chronological order of their anchor instant
    """
    if history < 2:
        raise ValueError(f"History must cover at least 2 sensing rows, got {history}")
    if stride < 1 or cadence_steps < 1:
        raise ValueError("stride and cadence_steps must be >= 1")
    window_steps = history - 1 if window_steps is None else int(window_steps)
    if window_steps < 1:
        raise ValueError(f"window_steps must be >= 1, got {window_steps}")
    source = field if measured is None else measured
    if source.domain != field.domain:
        raise ValueError("Measured field must share the ground-truth domain")

    domain = field.domain
    cells = layout.input_cells(domain)
    positions = tuple(float(p) for p in layout.input_positions)
    cadence = cadence_steps * domain.dt
    span = window_steps * cadence

    first = max(0, (history - 1 - window_steps) * cadence_steps)
    last = domain.n_times - 1 - window_steps * cadence_steps
    if last < first:
        raise ValueError(
            f"Insufficient history: a window needs {first + window_steps * cadence_steps + 1} "
            f"rows but the field has {domain.n_times}"
        )

    rng = np.random.default_rng(seed)
    xs = np.asarray(positions) / domain.length
    instants = np.arange(window_steps + 1) * cadence_steps
    samples = []
    for anchor in range(first, last + 1, stride):
        rows = window_rows(anchor, history, cadence_steps, window_steps)
        window = MeasurementWindow(
            t0=anchor * domain.dt,
            speed=source.speed[np.ix_(rows, cells)],
            flow=source.flow[np.ix_(rows, cells)],
            cadence=cadence,
            positions=positions,
        )
        obs_rows = anchor + instants
        grid_t, grid_x = np.meshgrid(instants / instants[-1], xs, indexing="ij")
        samples.append(
            TrainSample(
                window=window,
                span=span,
                collocation=draw_collocation(rng, collocation),
                observed=np.stack([grid_x.ravel(), grid_t.ravel()], axis=1),
                observed_speed=source.speed[np.ix_(obs_rows, cells)].ravel(),
                observed_flow=source.flow[np.ix_(obs_rows, cells)].ravel(),
                anchor_row=anchor,
            )
        )
    logger.info(
        "Built %d samples (H=%d, W=%d, P=%d, R=%d, span=%.0fs)",
        len(samples), history, len(cells), collocation, samples[0].observed.shape[0], span,
    )
    return samples


def split_dataset(
    samples: Sequence[TrainSample], ratios: Sequence[float] = (0.7, 0.1, 0.2)
) -> Tuple[List[TrainSample], List[TrainSample], List[TrainSample]]:
    """
    Chronological train/validation/test split.

    Args:
        samples: Samples in any order; they are sorted by anchor instant
        ratios: Three non-negative fractions summing to 1

    Returns:
        (train, val, test), contiguous in time
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ValueError(f"Split ratios must be three non-negative numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"Split ratios must sum to 1, got {sum(ratios)}")
    if len(samples) < 10:
        raise ValueError(f"Need at least 10 samples to split, got {len(samples)}")
    ordered = sorted(samples, key=lambda s: s.t0)
    n = len(ordered)
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    n_val = min(n_val, n - n_train)
    return ordered[:n_train], ordered[n_train : n_train + n_val], ordered[n_train + n_val :]
