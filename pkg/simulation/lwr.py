import logging

import numpy as np

from data.grid import GroundTruthField
from physics.fundamental_diagram import (
    demand,
    density_for_speed,
    equilibrium_speed,
    max_wave_speed,
    supply,
)
from simulation.pw import (
    DENSITY_FLOOR,
    SimulationBlowUpError,
    SimulationResult,
    check_cfl,
)
from simulation.scenario import ScenarioConfig

logger = logging.getLogger(__name__)


class GodunovSimulator:
    """
    First-order Godunov (minimum supply-demand) scheme for LWR.

    Interface flux between cells i and i+1 is min(D_i(rho_i), S_{i+1}(rho_{i+1}))
    with each side evaluated under its own cell's FD. Used as an independent
    oracle for the PW simulator, never as a data source.
    """

    def __init__(self, config: ScenarioConfig):
        self.config = config
        self.domain = config.domain
        self.units = config.units
        self.step = self.domain.dt / config.substeps
        self.v_f, self.rho_c, self.a = config.cell_params()
        self.rho, _ = config.initial_state()
        self.inflow = 0.0
        self.outflow = 0.0
        check_cfl(
            self.step,
            self.domain.dx,
            float(np.max(max_wave_speed(self.v_f, self.a))),
            self.domain.dt,
        )

    def _interface_fluxes(self, t: float) -> np.ndarray:
        sending = demand(self.rho, self.v_f, self.rho_c, self.a)
        receiving = supply(self.rho, self.v_f, self.rho_c, self.a)
        q_in = float(self.units.flow_to_internal(self.config.demand.at(t)))
        upstream = min(q_in, receiving[0])
        if self.config.boundary_speed is None:
            downstream = sending[-1]
        else:
            v_b = float(self.units.speed_to_internal(self.config.boundary_speed.at(t)))
            rho_b = density_for_speed(v_b, self.v_f[-1], self.rho_c[-1], self.a[-1])
            exit_supply = supply(rho_b, self.v_f[-1], self.rho_c[-1], self.a[-1])
            downstream = min(sending[-1], float(exit_supply))
        interior = np.minimum(sending[:-1], receiving[1:])
        return np.concatenate([[upstream], interior, [downstream]])

    def advance(self, t: float) -> None:
        fluxes = self._interface_fluxes(t)
        rho_new = self.rho - self.step / self.domain.dx * np.diff(fluxes)
        if not np.all(np.isfinite(rho_new)):
            raise SimulationBlowUpError(f"LWR state became non-finite at t={t:g}s")
        self.inflow += self.step * fluxes[0]
        self.outflow += self.step * fluxes[-1]
        self.rho = np.clip(rho_new, DENSITY_FLOOR, self.config.jam_density)

    def run(self) -> SimulationResult:
        n_times = self.domain.n_times
        rho_rows = np.empty(self.domain.shape)
        for k in range(n_times):
            rho_rows[k] = self.rho
            if k == n_times - 1:
                break
            for s in range(self.config.substeps):
                self.advance(k * self.domain.dt + s * self.step)
        v_rows = equilibrium_speed(rho_rows, self.v_f, self.rho_c, self.a)
        field = GroundTruthField(
            domain=self.domain,
            speed=self.units.speed_from_internal(v_rows),
            flow=self.units.flow_from_internal(rho_rows * v_rows),
        )
        logger.debug("Godunov run of %s finished", self.config.name)
        return SimulationResult(field, self.inflow, self.outflow, 0)


def simulate_lwr_godunov(config: ScenarioConfig) -> GroundTruthField:
    """Ground-truth field of a scenario under first-order LWR (oracle use)."""
    return GodunovSimulator(config).run().field
