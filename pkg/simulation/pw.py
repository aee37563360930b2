import logging
from dataclasses import dataclass

import numpy as np

from data.grid import GroundTruthField
from physics.fundamental_diagram import density_for_speed, equilibrium_speed
from simulation.scenario import ScenarioConfig

logger = logging.getLogger(__name__)

SPEED_FLOOR = 0.1  # dataset speed units
DENSITY_FLOOR = 1e-6  # veh per length unit
SPEED_CEILING_FACTOR = 1.5  # times the cell's v_f


class CFLViolationError(ValueError):
    """The integration step is too long for the scheme to be stable."""

    def __init__(self, step: float, suggested: float, substeps: int):
        self.step = step
        self.suggested_dt = suggested
        self.suggested_substeps = substeps
        super().__init__(
            f"CFL condition violated: integration step {step:g}s exceeds {suggested:.6g}s; "
            f"use dt <= {suggested:.6g}s or substeps >= {substeps}"
        )


class SimulationBlowUpError(FloatingPointError):
    """The simulated state became non-finite."""


@dataclass(frozen=True)
class SimulationResult:
    """
    Output of a simulator run.

    Attributes:
        field: Speed and flow on the output lattice
        inflow: Vehicles that entered upstream over the run
        outflow: Vehicles that left downstream over the run
        clamped: Number of cell updates hit by a density or speed clamp
    """

    field: GroundTruthField
    inflow: float
    outflow: float
    clamped: int


def check_cfl(step: float, dx: float, wave_speed: float, output_dt: float) -> None:
    limit = dx / wave_speed
    if step > limit * (1 + 1e-12):
        raise CFLViolationError(step, limit, int(np.ceil(output_dt / limit)))


class PWSimulator:
    """
    Explicit first-order upwind integration of the PW model on a cell lattice.

    Density follows the flux difference of upwind cell flows. Speed follows
    upwind convection, downwind anticipation c/rho * (rho[i+1] - rho[i]) / dx
    and relaxation towards the cell's FD over tau. All state is held in
    coherent internal units (length unit, s).
    """

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.domain = config.domain
        self.units = config.units
        self.step = self.domain.dt / config.substeps
        self.v_f, self.rho_c, self.a = config.cell_params()
        self.v_min = float(self.units.speed_to_internal(SPEED_FLOOR))
        self.v_max = SPEED_CEILING_FACTOR * self.v_f
        self.rho, self.v = config.initial_state()
        self.inflow = 0.0
        self.outflow = 0.0
        self.clamped = 0
        check_cfl(
            self.step,
            self.domain.dx,
            float(np.max(self.v_f)) + np.sqrt(config.constants.c),
            self.domain.dt,
        )

    def _downstream_density(self, t: float) -> float:
        if self.config.boundary_speed is None:
            return self.rho[-1]
        v_b = float(self.units.speed_to_internal(self.config.boundary_speed.at(t)))
        return float(density_for_speed(v_b, self.v_f[-1], self.rho_c[-1], self.a[-1]))

    def _update_density(self, q: np.ndarray, q_in: float) -> np.ndarray:
        fluxes = np.concatenate([[q_in], q])
        return self.rho - self.step / self.domain.dx * np.diff(fluxes)

    def _update_speed(self, rho_ghost: float) -> np.ndarray:
        tau, c = self.config.constants.tau, self.config.constants.c
        v_up = np.concatenate([[self.v[0]], self.v[:-1]])
        rho_down = np.concatenate([self.rho[1:], [rho_ghost]])
        convection = self.v * (self.v - v_up) / self.domain.dx
        anticipation = c / self.rho * (rho_down - self.rho) / self.domain.dx
        relaxation = (equilibrium_speed(self.rho, self.v_f, self.rho_c, self.a) - self.v) / tau
        return self.v + self.step * (relaxation - convection - anticipation)

    def _apply_clamps(self, rho: np.ndarray, v: np.ndarray):
        clipped_rho = np.clip(rho, DENSITY_FLOOR, self.config.jam_density)
        clipped_v = np.clip(v, self.v_min, self.v_max)
        self.clamped += int(np.count_nonzero(clipped_rho != rho) + np.count_nonzero(clipped_v != v))
        return clipped_rho, clipped_v

    def advance(self, t: float) -> None:
        """One integration step starting at time t."""
        q = self.rho * self.v
        q_in = float(self.units.flow_to_internal(self.config.demand.at(t)))
        rho_new = self._update_density(q, q_in)
        v_new = self._update_speed(self._downstream_density(t))
        if not (np.all(np.isfinite(rho_new)) and np.all(np.isfinite(v_new))):
            raise SimulationBlowUpError(f"PW state became non-finite at t={t:g}s")
        self.inflow += self.step * q_in
        self.outflow += self.step * q[-1]
        self.rho, self.v = self._apply_clamps(rho_new, v_new)

    def run(self) -> SimulationResult:
        n_times = self.domain.n_times
        rho_rows = np.empty(self.domain.shape)
        v_rows = np.empty(self.domain.shape)
        for k in range(n_times):
            rho_rows[k], v_rows[k] = self.rho, self.v
            if k == n_times - 1:
                break
            for s in range(self.config.substeps):
                self.advance(k * self.domain.dt + s * self.step)
        if self.clamped:
            logger.warning("PW simulation clamped %d cell updates", self.clamped)
        field = GroundTruthField(
            domain=self.domain,
            speed=self.units.speed_from_internal(v_rows),
            flow=self.units.flow_from_internal(rho_rows * v_rows),
        )
        logger.info(
            "Simulated %s: %d steps, inflow %.1f veh, outflow %.1f veh",
            self.config.name, (n_times - 1) * self.config.substeps, self.inflow, self.outflow,
        )
        return SimulationResult(field, self.inflow, self.outflow, self.clamped)


def simulate_pw(config: ScenarioConfig) -> GroundTruthField:
    """Ground-truth field of a scenario under the PW model."""
    return PWSimulator(config).run().field
