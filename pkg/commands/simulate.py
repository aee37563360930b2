import json
import logging

import click

from commands.common import cli_errors, run_config, sampling_of, scenario_of, simulate
from data.domain import SpaceTimeDomain
from data.grid import write_grid
from data.trajectories import aggregate_trajectories, load_trajectories
from simulation.scenario import describe
from simulation.sensors import add_measurement_noise, sample_sensors
from utils.manifest import write_manifest

logger = logging.getLogger(__name__)


def register_simulate_commands(cli: click.Group) -> None:
    """Attach the data-producing subcommands: simulate and ingest."""

    @cli.command("simulate")
    @click.pass_context
    @cli_errors
    def simulate_command(ctx: click.Context):
        """Simulate the configured scenario and write ground truth and sensor series."""
        run, config = run_config(ctx, "simulate")
        scenario = scenario_of(config)
        truth = simulate(config, scenario)
        measured = add_measurement_noise(truth, scenario.layout, scenario.noise, scenario.seed)
        cadence_steps = int(sampling_of(config)["cadence_steps"])

        grid_path = write_grid(truth, run.out / "ground_truth.csv")
        series_path = run.out / "sensors.csv"
        sample_sensors(measured, scenario.layout, cadence_steps).to_csv(
            series_path, index=False, float_format="%.17g", lineterminator="\n"
        )
        echo_path = run.out / "scenario.json"
        echo = {
            "scenario": config["scenario"],
            "physics": config["physics"],
            "domain": scenario.domain.to_dict(),
            "layout": scenario.layout.to_dict(),
            "summary": list(describe(scenario)),
        }
        echo_path.write_text(json.dumps(echo, indent=2, sort_keys=True) + "\n")
        write_manifest(run.out, "simulate", config, [grid_path, series_path, echo_path], seed=scenario.seed)
        for line in describe(scenario):
            click.echo(line)
        click.echo(f"Wrote {grid_path}")

    @cli.command("ingest")
    @click.option(
        "--trajectories",
        "trajectory_path",
        required=True,
        type=click.Path(exists=True, dir_okay=False),
        help="Trajectory CSV (units line, then vehicle_id,t,x,v)",
    )
    @click.pass_context
    @cli_errors
    def ingest_command(ctx: click.Context, trajectory_path: str):
        """Aggregate trajectories onto the scenario lattice (Edie definitions)."""
        run, config = run_config(ctx, "ingest")
        frame, units = load_trajectories(trajectory_path)
        section = config["scenario"]
        domain = SpaceTimeDomain(
            length=float(section["length"]),
            horizon=float(section["horizon"]),
            dx=float(section["dx"]),
            dt=float(section["dt"]),
            units=units,
        )
        field = aggregate_trajectories(frame, domain)
        grid_path = write_grid(field, run.out / "ground_truth.csv")
        write_manifest(run.out, "ingest", config, [grid_path], inputs=[trajectory_path])
        click.echo(f"Aggregated {frame['vehicle_id'].nunique()} vehicles into {grid_path}")
