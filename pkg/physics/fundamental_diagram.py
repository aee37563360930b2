"""
Exponential three-parameter fundamental diagram

    V(rho) = v_f * exp(-(1/a) * (rho / rho_c) ** a)

in a numpy flavour for the simulators and a graph flavour for the losses.
Capacity of this curve sits exactly at rho_c.
"""

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from autodiff import graph as G
from data.units import UnitSystem

SHAPE_RANGE = (0.5, 4.0)


@dataclass(frozen=True)
class FDParams:
    """
    Fundamental-diagram triple.

    Attributes:
        v_f: Free-flow speed (speed units)
        rho_c: Critical density (veh per length unit)
        a: Dimensionless shape exponent in [0.5, 4]
    """

    v_f: float
    rho_c: float
    a: float

    def __post_init__(self):
        if not self.v_f > 0:
            raise ValueError(f"v_f must be positive, got {self.v_f}")
        if not self.rho_c > 0:
            raise ValueError(f"rho_c must be positive, got {self.rho_c}")
        if not SHAPE_RANGE[0] <= self.a <= SHAPE_RANGE[1]:
            raise ValueError(f"a must lie in {SHAPE_RANGE}, got {self.a}")

    @classmethod
    def from_dict(cls, values: dict) -> "FDParams":
        unknown = set(values) - {"v_f", "rho_c", "a"}
        if unknown:
            raise ValueError(f"Unknown FD keys: {sorted(unknown)}")
        return cls(float(values["v_f"]), float(values["rho_c"]), float(values["a"]))

    def to_dict(self) -> dict:
        return {"v_f": self.v_f, "rho_c": self.rho_c, "a": self.a}

    def to_internal(self, units: UnitSystem) -> "FDParams":
        """Same curve with v_f in length units per second."""
        return FDParams(float(units.speed_to_internal(self.v_f)), self.rho_c, self.a)


@dataclass(frozen=True)
class PWConstants:
    """Relaxation time tau (s) and anticipation coefficient c ((length unit/s)^2)."""

    tau: float = 18.0
    c: float = 40.0

    def __post_init__(self):
        if not (self.tau > 0 and self.c > 0):
            raise ValueError(f"tau and c must be positive, got tau={self.tau}, c={self.c}")


def equilibrium_speed(rho, v_f, rho_c, a) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.float64)
    return v_f * np.exp(-np.power(np.maximum(rho, 0.0) / rho_c, a) / a)


def equilibrium_flow(rho, v_f, rho_c, a) -> np.ndarray:
    return np.asarray(rho, dtype=np.float64) * equilibrium_speed(rho, v_f, rho_c, a)


def density_for_speed(speed, v_f, rho_c, a, floor: float = 1e-6) -> np.ndarray:
    """Inverse of V on its whole branch; speeds at or above v_f map to the floor density."""
    ratio = np.clip(np.asarray(speed, dtype=np.float64) / v_f, 1e-300, 1.0)
    return np.maximum(rho_c * np.power(-a * np.log(ratio), 1.0 / a), floor)


def demand(rho, v_f, rho_c, a) -> np.ndarray:
    """Sending function of the Godunov scheme."""
    return equilibrium_flow(np.minimum(rho, rho_c), v_f, rho_c, a)


def supply(rho, v_f, rho_c, a) -> np.ndarray:
    """Receiving function of the Godunov scheme."""
    return equilibrium_flow(np.maximum(rho, rho_c), v_f, rho_c, a)


def max_wave_speed(v_f, a) -> np.ndarray:
    """Upper bound of |dQ/drho| over all densities."""
    a = np.asarray(a, dtype=np.float64)
    return np.asarray(v_f) * np.maximum(1.0, a * np.exp(-(a + 1.0) / a))


FDLike = Union[FDParams, Tuple[G.ArrayLike, G.ArrayLike, G.ArrayLike]]


def fd_speed(rho: G.ArrayLike, params: FDLike) -> G.GraphNode:
    """
    Equilibrium speed as a graph node, differentiable in rho and in the parameters.

    Args:
        rho: Positive density node (veh per length unit)
        params: FDParams, or a (v_f, rho_c, a) tuple of nodes/arrays broadcastable to rho

    Returns:
        Speed node in the units of v_f
    """
    rho = G.as_node(rho)
    if np.any(rho.value <= 0):
        raise ValueError("fd_speed requires positive density")
    if isinstance(params, FDParams):
        v_f, rho_c, a = params.v_f, params.rho_c, params.a
    else:
        v_f, rho_c, a = params
    power = G.exp(G.mul(a, G.log(G.div(rho, rho_c))))
    return G.mul(v_f, G.exp(G.neg(G.div(power, a))))
