from dataclasses import dataclass, replace
from typing import Sequence, Union

import numpy as np

from data.grid import EstimateField, GroundTruthField
from data.samples import MeasurementWindow, TrainSample

VARIABLES = ("speed", "flow")


@dataclass(frozen=True)
class NormalizationStats:
    """Per-variable z-score parameters, computed on the training split only."""

    speed_mean: float
    speed_std: float
    flow_mean: float
    flow_std: float

    def __post_init__(self):
        for name in ("speed_std", "flow_std"):
            if not getattr(self, name) > 0:
                raise ValueError(f"zero variance: {name} = {getattr(self, name)}")

    def mean(self, variable: str) -> float:
        return getattr(self, f"{variable}_mean")

    def std(self, variable: str) -> float:
        return getattr(self, f"{variable}_std")

    def scale(self, values, variable: str) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.mean(variable)) / self.std(variable)

    def unscale(self, values, variable: str) -> np.ndarray:
        return np.asarray(values, dtype=np.float64) * self.std(variable) + self.mean(variable)

    def to_dict(self) -> dict:
        return {
            "speed_mean": self.speed_mean,
            "speed_std": self.speed_std,
            "flow_mean": self.flow_mean,
            "flow_std": self.flow_std,
        }

    @classmethod
    def from_dict(cls, values: dict) -> "NormalizationStats":
        return cls(**{key: float(values[key]) for key in cls.__dataclass_fields__})


def compute_stats(train_samples: Sequence[TrainSample]) -> NormalizationStats:
    """
    Z-score parameters from the windows and observations of the training split.

    Raises:
        ValueError: "zero variance" when either variable is constant
    """
    if not train_samples:
        raise ValueError("Cannot compute normalization stats from an empty split")
    pooled = {}
    for variable in VARIABLES:
        values = np.concatenate(
            [getattr(s.window, variable).ravel() for s in train_samples]
            + [getattr(s, f"observed_{variable}") for s in train_samples]
        )
        std = float(np.std(values))
        if std <= 1e-12 * max(1.0, float(np.max(np.abs(values)))):
            raise ValueError(f"zero variance in training {variable}")
        pooled[variable] = (float(np.mean(values)), std)
    return NormalizationStats(
        speed_mean=pooled["speed"][0],
        speed_std=pooled["speed"][1],
        flow_mean=pooled["flow"][0],
        flow_std=pooled["flow"][1],
    )


@dataclass(frozen=True)
class NormalizedField:
    """
    Z-scored speed and flow of a dense field.

    Attributes:
        source: The raw GroundTruthField or EstimateField, kept for its geometry
        speed: Scaled speed, same shape as the source grid
        flow: Scaled flow, same shape as the source grid
    """

    source: Union[GroundTruthField, EstimateField]
    speed: np.ndarray
    flow: np.ndarray


Normalizable = Union[MeasurementWindow, GroundTruthField, EstimateField]


def normalize(data: Normalizable, stats: NormalizationStats):
    """
    Z-scored copy of a raw window or field.

    Returns:
        A normalized MeasurementWindow for a window, a NormalizedField for a field
    """
    if isinstance(data, (GroundTruthField, EstimateField)):
        return NormalizedField(
            source=data,
            speed=stats.scale(data.speed, "speed"),
            flow=stats.scale(data.flow, "flow"),
        )
    if data.normalized:
        raise ValueError("Window is already normalized")
    return replace(
        data,
        speed=stats.scale(data.speed, "speed"),
        flow=stats.scale(data.flow, "flow"),
        normalized=True,
    )


def denormalize(data: Union[MeasurementWindow, NormalizedField], stats: NormalizationStats):
    """Inverse of normalize; values are clamped non-negative."""
    speed = np.maximum(stats.unscale(data.speed, "speed"), 0.0)
    flow = np.maximum(stats.unscale(data.flow, "flow"), 0.0)
    if isinstance(data, NormalizedField):
        return replace(data.source, speed=speed, flow=flow)
    if not data.normalized:
        raise ValueError("Window is not normalized")
    return replace(data, speed=speed, flow=flow, normalized=False)
