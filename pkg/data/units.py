from dataclasses import dataclass

import numpy as np

from config.defaults import FLOW_UNITS, LENGTH_UNITS, SPEED_UNITS

# Conversion factors into SI (m, m/s, veh/s)
_LENGTH_TO_M = {"m": 1.0, "ft": 0.3048}
_SPEED_TO_MPS = {"km/h": 1.0 / 3.6, "ft/s": 0.3048}
_FLOW_TO_VPS = {"veh/h": 1.0 / 3600.0, "veh/s": 1.0}


@dataclass(frozen=True)
class UnitSystem:
    """
    Units a dataset is expressed in.

    Internally every physics computation runs in coherent units: the dataset's
    length unit, seconds, length/s for speed and veh/s for flow, so density
    comes out in veh per length unit.
    """

    length: str = "m"
    speed: str = "km/h"
    flow: str = "veh/h"
    time: str = "s"

    def __post_init__(self):
        if self.length not in LENGTH_UNITS:
            raise ValueError(f"Unknown length unit: {self.length}")
        if self.speed not in SPEED_UNITS:
            raise ValueError(f"Unknown speed unit: {self.speed}")
        if self.flow not in FLOW_UNITS:
            raise ValueError(f"Unknown flow unit: {self.flow}")
        if self.time != "s":
            raise ValueError(f"Unknown time unit: {self.time}")

    @classmethod
    def from_dict(cls, values: dict) -> "UnitSystem":
        unknown = set(values) - {"length", "speed", "flow", "time"}
        if unknown:
            raise ValueError(f"Unknown unit keys: {sorted(unknown)}")
        return cls(**values)

    def to_dict(self) -> dict:
        return {"length": self.length, "speed": self.speed, "flow": self.flow}

    @property
    def speed_factor(self) -> float:
        """Multiplier from dataset speed units to length units per second."""
        return _SPEED_TO_MPS[self.speed] / _LENGTH_TO_M[self.length]

    @property
    def flow_factor(self) -> float:
        """Multiplier from dataset flow units to vehicles per second."""
        return _FLOW_TO_VPS[self.flow]

    def speed_to_internal(self, values):
        return np.asarray(values, dtype=np.float64) * self.speed_factor

    def speed_from_internal(self, values):
        return np.asarray(values, dtype=np.float64) / self.speed_factor

    def flow_to_internal(self, values):
        return np.asarray(values, dtype=np.float64) * self.flow_factor

    def flow_from_internal(self, values):
        return np.asarray(values, dtype=np.float64) / self.flow_factor

    def speed_from_kmh(self, values):
        """Dataset speed units for values given in km/h."""
        return np.asarray(values, dtype=np.float64) * _SPEED_TO_MPS["km/h"] / _SPEED_TO_MPS[self.speed]

    def header_tags(self) -> str:
        return f"length={self.length}, speed={self.speed}, flow={self.flow}"
