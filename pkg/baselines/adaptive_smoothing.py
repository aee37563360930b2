"""
Adaptive smoothing: two anisotropic exponential kernels, one along free-flow
characteristics and one along congested ones, blended by a speed-dependent
weight.

    phi_c(dx, dt) = exp(-|dx - c dt| / sigma - |dt| / tau_s)
    z_c(x, t)     = sum_i phi_c v_i / sum_i phi_c
    w             = (1 + tanh((V_c - min(z_free, z_cong)) / DeltaV)) / 2
    v             = w z_cong + (1 - w) z_free

Flow is smoothed with the same kernels and the weight computed from speed.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from config.defaults import AS_DEFAULTS, AS_DEFAULTS_FT
from data.domain import Lattice
from data.grid import EstimateField
from data.units import UnitSystem
from baselines.interpolation import SensorSeries

logger = logging.getLogger(__name__)

QUERY_CHUNK = 2048


@dataclass(frozen=True)
class ASConfig:
    """
    Attributes:
        sigma: Spatial kernel width (length units)
        tau_s: Temporal kernel width (s)
        c_free: Free-flow wave speed (speed units, positive)
        c_cong: Congested wave speed (speed units, negative)
        v_crit: Crossover speed V_c (speed units)
        delta_v: Transition width DeltaV (speed units)
    """

    sigma: float
    tau_s: float
    c_free: float
    c_cong: float
    v_crit: float
    delta_v: float

    def __post_init__(self):
        if self.sigma <= 0 or self.tau_s <= 0:
            raise ValueError(f"Kernel widths must be positive, got sigma={self.sigma}, tau_s={self.tau_s}")
        if not self.c_cong < 0 < self.c_free:
            raise ValueError(f"Need c_cong < 0 < c_free, got {self.c_cong} and {self.c_free}")
        if self.delta_v <= 0:
            raise ValueError(f"DeltaV must be positive, got {self.delta_v}")

    @classmethod
    def from_dict(cls, values: dict, units: UnitSystem, cadence: float) -> "ASConfig":
        """
        Build from an `adaptive_smoothing` section; unset keys take the defaults
        scaled to the dataset units and sensing cadence.
        """
        unknown = set(values) - set(AS_DEFAULTS)
        if unknown:
            raise ValueError(f"Unknown adaptive smoothing keys: {sorted(unknown)}")
        defaults = dict(AS_DEFAULTS)
        if units.length == "ft":
            defaults.update(AS_DEFAULTS_FT)
        # speed defaults are stored in km/h
        for key in ("c_free", "c_cong", "v_crit", "delta_v"):
            defaults[key] = float(units.speed_from_kmh(AS_DEFAULTS[key]))
        merged = {**defaults, **values}
        return cls(
            sigma=float(merged["sigma"]),
            tau_s=float(merged["tau_factor"]) * cadence,
            c_free=float(merged["c_free"]),
            c_cong=float(merged["c_cong"]),
            v_crit=float(merged["v_crit"]),
            delta_v=float(merged["delta_v"]),
        )


def _kernel(dx: np.ndarray, dt: np.ndarray, wave: float, config: ASConfig) -> np.ndarray:
    return np.exp(-np.abs(dx - wave * dt) / config.sigma - np.abs(dt) / config.tau_s)


def _smooth(phi: np.ndarray, values: np.ndarray) -> np.ndarray:
    mass = phi.sum(axis=1)
    if np.any(mass <= 0):
        raise ValueError(
            f"Kernel mass is zero at {int(np.count_nonzero(mass <= 0))} queries; "
            "sigma or tau_s is too small for the sensor spacing"
        )
    return phi @ values / mass


def blend_weight(v_free: np.ndarray, v_cong: np.ndarray, config: ASConfig) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh((config.v_crit - np.minimum(v_free, v_cong)) / config.delta_v))


def adaptive_smoothing_estimate(
    series: SensorSeries, config: ASConfig, lattice: Lattice, chunk: Optional[int] = None
) -> EstimateField:
    """
    Args:
        series: Observations at >= 2 sensors and >= 2 instants
        config: Kernel widths and wave speeds in the series' units
        lattice: Query positions and instants
        chunk: Queries evaluated per block

    Returns:
        EstimateField; every value is a convex combination of observations
    """
    if len(series.positions) < 2 or len(series.times) < 2:
        raise ValueError("Adaptive smoothing needs at least 2 sensors and 2 observation instants")
    # wave speeds in length units per second
    factor = series.units.speed_factor
    c_free, c_cong = config.c_free * factor, config.c_cong * factor

    obs_t, obs_x = np.meshgrid(series.times, series.positions, indexing="ij")
    obs_t, obs_x = obs_t.ravel(), obs_x.ravel()
    obs_v, obs_q = series.speed.ravel(), series.flow.ravel()
    query_t, query_x = np.meshgrid(lattice.times, lattice.positions, indexing="ij")
    query_t, query_x = query_t.ravel(), query_x.ravel()

    chunk = chunk or QUERY_CHUNK
    speed, flow = np.empty_like(query_t), np.empty_like(query_t)
    for start in range(0, len(query_t), chunk):
        block = slice(start, start + chunk)
        dx = query_x[block, None] - obs_x[None, :]
        dt = query_t[block, None] - obs_t[None, :]
        phi_free = _kernel(dx, dt, c_free, config)
        phi_cong = _kernel(dx, dt, c_cong, config)
        v_free, v_cong = _smooth(phi_free, obs_v), _smooth(phi_cong, obs_v)
        w = blend_weight(v_free, v_cong, config)
        speed[block] = w * v_cong + (1.0 - w) * v_free
        flow[block] = w * _smooth(phi_cong, obs_q) + (1.0 - w) * _smooth(phi_free, obs_q)
    return EstimateField(
        lattice=lattice,
        speed=speed.reshape(lattice.shape),
        flow=flow.reshape(lattice.shape),
        units=series.units,
    )

