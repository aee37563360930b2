from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from config.defaults import SCENARIO_DEFAULTS
from data.domain import SensorLayout, SpaceTimeDomain
from data.units import UnitSystem
from physics.fundamental_diagram import FDParams, PWConstants, equilibrium_speed


@dataclass(frozen=True)
class Profile:
    """Piecewise-constant boundary profile: a base value with surge intervals [start, end)."""

    base: float
    surges: Tuple[Tuple[float, float, float], ...] = ()

    def __post_init__(self):
        for start, end, _ in self.surges:
            if end <= start:
                raise ValueError(f"Surge interval [{start}, {end}) is empty")

    @classmethod
    def from_dict(cls, values: Union[float, dict]) -> "Profile":
        if not isinstance(values, dict):
            return cls(base=float(values))
        unknown = set(values) - {"base", "surges"}
        if unknown:
            raise ValueError(f"Unknown profile keys: {sorted(unknown)}")
        surges = tuple(
            (float(s["start"]), float(s["end"]), float(s["value"])) for s in values.get("surges", [])
        )
        return cls(base=float(values["base"]), surges=surges)

    def to_dict(self) -> dict:
        return {
            "base": self.base,
            "surges": [{"start": s, "end": e, "value": v} for s, e, v in self.surges],
        }

    def at(self, t: float) -> float:
        value = self.base
        for start, end, surge in self.surges:
            if start <= t < end:
                value = surge
        return value

    def values(self) -> List[float]:
        return [self.base] + [v for _, _, v in self.surges]


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Everything a synthetic run needs. Values are in the domain's dataset units.

    Attributes:
        domain: Stretch, horizon, output lattice and units
        segments: True FD per segment; cell j belongs to segment floor(x_j / L * C)
        jam_density: Upper density clamp (veh per length unit)
        demand: Upstream inflow profile (flow units)
        boundary_speed: Downstream speed profile (speed units); None leaves the exit free
        initial_density: Scalar or one value per cell (veh per length unit)
        initial_speed: Scalar or per cell; None places the start on each cell's FD
        layout: Input and evaluation sensors
        noise: Measurement noise std (speed, flow)
        seed: Noise seed
        substeps: Integration steps per output step
        constants: PW relaxation time and anticipation coefficient
        name: Scenario identifier carried into reports
    """

    domain: SpaceTimeDomain
    segments: Tuple[FDParams, ...]
    jam_density: float
    demand: Profile
    boundary_speed: Optional[Profile]
    initial_density: Union[float, Tuple[float, ...]]
    layout: SensorLayout
    initial_speed: Union[None, float, Tuple[float, ...]] = None
    noise: Tuple[float, float] = (0.0, 0.0)
    seed: int = 0
    substeps: int = 1
    constants: PWConstants = field(default_factory=PWConstants)
    name: str = "scenario"

    def __post_init__(self):
        if not self.segments:
            raise ValueError("At least one FD segment is required")
        if any(v < 0 for v in self.demand.values()):
            raise ValueError("Demand must be non-negative")
        if self.boundary_speed is not None and any(v <= 0 for v in self.boundary_speed.values()):
            raise ValueError("Boundary speeds must be positive")
        if any(s < 0 for s in self.noise):
            raise ValueError(f"Noise stds must be non-negative, got {self.noise}")
        if self.substeps < 1:
            raise ValueError(f"substeps must be >= 1, got {self.substeps}")
        if self.jam_density <= max(s.rho_c for s in self.segments):
            raise ValueError("Jam density must exceed every critical density")
        self.initial_state()

    @property
    def units(self) -> UnitSystem:
        return self.domain.units

    def segment_index(self) -> np.ndarray:
        """Segment of every cell."""
        count = len(self.segments)
        centers = self.domain.cell_centers() / self.domain.length
        return np.minimum((centers * count).astype(int), count - 1)

    def cell_params(self, internal: bool = True) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-cell (v_f, rho_c, a) arrays, v_f in internal length/s when internal is set."""
        segments = [s.to_internal(self.units) if internal else s for s in self.segments]
        index = self.segment_index()
        return (
            np.array([segments[i].v_f for i in index]),
            np.array([segments[i].rho_c for i in index]),
            np.array([segments[i].a for i in index]),
        )

    def _per_cell(self, value, label: str) -> np.ndarray:
        array = np.asarray(value, dtype=np.float64)
        if array.ndim > 0 and array.size != self.domain.n_cells:
            raise ValueError(f"{label} needs 1 or {self.domain.n_cells} values")
        return np.broadcast_to(array, (self.domain.n_cells,)).copy()

    def initial_state(self) -> Tuple[np.ndarray, np.ndarray]:
        """Initial (density, internal speed) per cell."""
        rho = self._per_cell(self.initial_density, "initial_density")
        if np.any(rho <= 0) or np.any(rho > self.jam_density):
            raise ValueError("Initial densities must lie in (0, jam_density]")
        if self.initial_speed is None:
            v_f, rho_c, a = self.cell_params()
            speed = equilibrium_speed(rho, v_f, rho_c, a)
        else:
            speed = self.units.speed_to_internal(self._per_cell(self.initial_speed, "initial_speed"))
        if np.any(speed <= 0):
            raise ValueError("Initial speeds must be positive")
        return rho, speed

    @classmethod
    def from_dict(cls, values: dict, constants: Optional[PWConstants] = None) -> "ScenarioConfig":
        """
        Build a scenario from the `scenario` section of a run config.

        Args:
            values: Mapping shaped like config.defaults.SCENARIO_DEFAULTS
            constants: PW constants from the physics section (defaults when omitted)

        Returns:
            Validated ScenarioConfig
        """
        unknown = set(values) - set(SCENARIO_DEFAULTS)
        if unknown:
            raise ValueError(f"Unknown scenario keys: {sorted(unknown)}")
        merged = {**SCENARIO_DEFAULTS, **values}
        units = UnitSystem.from_dict(merged["units"])
        domain = SpaceTimeDomain(
            length=float(merged["length"]),
            horizon=float(merged["horizon"]),
            dx=float(merged["dx"]),
            dt=float(merged["dt"]),
            units=units,
        )
        sensors = merged["sensors"] or {}
        layout = SensorLayout.evenly_spaced(
            domain,
            int(sensors.get("count", 11)),
            sensors.get("positions"),
            sensors.get("evaluation"),
        )
        noise = merged["noise"] or {}
        boundary = merged["boundary_speed"]
        initial_density = merged["initial_density"]
        initial_speed = merged["initial_speed"]
        return cls(
            domain=domain,
            segments=tuple(FDParams.from_dict(s) for s in merged["segments"]),
            jam_density=float(merged["jam_density"]),
            demand=Profile.from_dict(merged["demand"]),
            boundary_speed=None if boundary is None else Profile.from_dict(boundary),
            initial_density=_scalar_or_tuple(initial_density),
            initial_speed=None if initial_speed is None else _scalar_or_tuple(initial_speed),
            layout=layout,
            noise=(float(noise.get("speed", 0.0)), float(noise.get("flow", 0.0))),
            seed=int(merged["seed"]),
            substeps=int(merged["substeps"]),
            constants=constants or PWConstants(),
            name=str(merged["name"]),
        )


def _scalar_or_tuple(value) -> Union[float, Tuple[float, ...]]:
    if isinstance(value, (list, tuple, np.ndarray)):
        return tuple(float(v) for v in value)
    return float(value)


def describe(config: ScenarioConfig) -> Sequence[str]:
    return [
        f"{config.name}: L={config.domain.length:g}{config.units.length}, "
        f"T={config.domain.horizon:g}s, {config.domain.n_cells} cells x {config.domain.n_times} steps",
        f"segments={len(config.segments)}, sensors={config.layout.n_inputs} input / "
        f"{len(config.layout.evaluation_positions)} evaluation",
    ]
