"""
Shared pipeline pieces of the subcommands: run setup, dataset assembly, model
construction and error reporting.
"""

import functools
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import click

from baselines.adaptive_smoothing import ASConfig
from baselines.pinn import PINNConfig, PINNModel
from baselines.vanilla import vanilla_pideeponet
from config.defaults import FIXED_FD_DEFAULTS, SAMPLING_DEFAULTS
from config.loader import RunConfig
from data.domain import SensorLayout
from data.grid import GroundTruthField, load_grid
from data.samples import TrainSample, build_samples, split_dataset
from evaluation.harness import (
    Method,
    adaptive_smoothing_method,
    inter2d_method,
    operator_method,
    pinn_method,
)
from models.configs import ModelConfig
from models.operator import OperatorModel
from physics.fundamental_diagram import FDParams
from physics.losses import PhysicsSettings
from simulation.lwr import simulate_lwr_godunov
from simulation.pw import simulate_pw
from simulation.scenario import ScenarioConfig
from simulation.sensors import add_measurement_noise
from training.checkpoint import load_checkpoint
from training.trainer import TrainConfig, TrainReport, train

logger = logging.getLogger(__name__)

VARIANTS = ("extended", "vanilla", "pinn")
BASELINES = ("inter2d", "as", "pinn")
SIMULATORS = {"pw": simulate_pw, "lwr": simulate_lwr_godunov}


def cli_errors(func):
    """Turn library errors into a ClickException (nonzero exit, message on stderr)."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except click.ClickException:
            raise
        except (ValueError, RuntimeError, FloatingPointError, KeyError, OSError) as exc:
            logger.debug("Command failed", exc_info=True)
            raise click.ClickException(f"{type(exc).__name__}: {exc}") from exc

    return wrapper


def run_config(ctx: click.Context, command: str) -> Tuple[RunConfig, Dict[str, dict]]:
    options = ctx.obj
    run = RunConfig(
        command=command,
        out=Path(options["out"]),
        config_path=Path(options["config"]) if options["config"] else None,
        seed=options["seed"],
        overrides=tuple(options["overrides"]),
    )
    config = run.resolve()
    run.prepare_out()
    return run, config


def scenario_of(config: Dict[str, dict]) -> ScenarioConfig:
    settings = PhysicsSettings.from_dict(config["physics"])
    return ScenarioConfig.from_dict(config["scenario"], constants=settings.constants)


def sampling_of(config: Dict[str, dict]) -> dict:
    unknown = set(config["sampling"]) - set(SAMPLING_DEFAULTS)
    if unknown:
        raise ValueError(f"Unknown sampling keys: {sorted(unknown)}")
    return {**SAMPLING_DEFAULTS, **config["sampling"]}


def simulate(config: Dict[str, dict], scenario: ScenarioConfig) -> GroundTruthField:
    simulator = config["data"].get("model", "pw")
    if simulator not in SIMULATORS:
        raise ValueError(f"Unknown simulator '{simulator}', expected one of {sorted(SIMULATORS)}")
    return SIMULATORS[simulator](scenario)


@dataclass
class Dataset:
    """Ground truth, the measured field, the sensor layout and the chronological splits."""

    name: str
    truth: GroundTruthField
    measured: GroundTruthField
    layout: SensorLayout
    segments: int
    train: List[TrainSample]
    val: List[TrainSample]
    test: List[TrainSample]
    inputs: List[Path] = field(default_factory=list)

    @property
    def span(self) -> float:
        return self.train[0].span

    @property
    def cadence(self) -> float:
        return self.train[0].window.cadence

    def all_samples(self) -> List[TrainSample]:
        return self.train + self.val + self.test


def load_dataset(config: Dict[str, dict], input_count: Optional[int] = None) -> Dataset:
    """
    Ground truth from data.grid (or the simulated scenario), noise at the input
    sensors, and the sample splits.

    Args:
        config: Resolved run configuration
        input_count: Keep only this many input sensors; evaluation sensors never change
    """
    scenario = scenario_of(config)
    grid = config["data"].get("grid")
    inputs = []
    if grid:
        truth = load_grid(grid)
        sensors = config["scenario"].get("sensors") or {}
        layout = SensorLayout.evenly_spaced(
            truth.domain, int(sensors.get("count", 11)), sensors.get("positions"), sensors.get("evaluation")
        )
        inputs.append(Path(grid))
    else:
        truth = simulate(config, scenario)
        layout = scenario.layout
    measured = add_measurement_noise(truth, layout, scenario.noise, scenario.seed)
    if input_count is not None:
        layout = layout.with_input_count(input_count)

    sampling = sampling_of(config)
    samples = build_samples(
        truth,
        layout,
        history=int(sampling["history"]),
        collocation=int(sampling["collocation"]),
        stride=int(sampling["stride"]),
        seed=int(config["training"]["seed"]),
        cadence_steps=int(sampling["cadence_steps"]),
        window_steps=sampling["window_steps"],
        measured=measured,
    )
    train_split, val_split, test_split = split_dataset(samples, sampling["split"])
    return Dataset(
        name=scenario.name,
        truth=truth,
        measured=measured,
        layout=layout,
        segments=len(scenario.segments),
        train=train_split,
        val=val_split,
        test=test_split,
        inputs=inputs,
    )


def fixed_fd() -> Tuple[FDParams, ...]:
    return (FDParams(**FIXED_FD_DEFAULTS),)


def model_config(config: Dict[str, dict], dataset: Dataset) -> ModelConfig:
    segments = config["model"].get("segments") or dataset.segments
    return ModelConfig.from_dict(
        config["model"],
        history=int(sampling_of(config)["history"]),
        sensors=dataset.layout.n_inputs,
        segments=int(segments),
        fixed_fd=fixed_fd(),
    )


def build_estimator(variant: str, config: Dict[str, dict], dataset: Dataset):
    """An untrained model of the requested variant sized for the dataset."""
    domain = dataset.truth.domain
    if variant == "extended":
        return OperatorModel(model_config(config, dataset), domain.units, domain.length, dataset.span)
    if variant == "vanilla":
        return vanilla_pideeponet(model_config(config, dataset), domain.units, domain.length, dataset.span)
    if variant == "pinn":
        return PINNModel(
            PINNConfig.from_dict(config["baselines"]["pinn"] or {}),
            domain.units,
            domain.length,
            domain.horizon,
            dataset.span,
            fixed_fd(),
        )
    raise ValueError(f"Unknown variant '{variant}', expected one of {VARIANTS}")


def fit(
    model, config: Dict[str, dict], dataset: Dataset, checkpoint: Optional[Path] = None
) -> TrainReport:
    """
    Train with the configured engine. The PINN reconstructs one scenario, so it
    fits the input-sensor observations of every window without a validation split.
    """
    train_config = TrainConfig.from_dict(config["training"], collocation=int(sampling_of(config)["collocation"]))
    settings = PhysicsSettings.from_dict(config["physics"])
    if isinstance(model, PINNModel):
        return train(model, dataset.all_samples(), [], train_config, settings, checkpoint_path=checkpoint)
    return train(model, dataset.train, dataset.val, train_config, settings, checkpoint_path=checkpoint)


def load_model(path: Path, dataset: Dataset):
    model = load_checkpoint(path)
    if isinstance(model, OperatorModel) and model.config.sensors != dataset.layout.n_inputs:
        raise ValueError(
            f"Checkpoint expects {model.config.sensors} input sensors, the dataset has {dataset.layout.n_inputs}"
        )
    return model


def model_method(model) -> Method:
    return pinn_method(model) if isinstance(model, PINNModel) else operator_method(model)


def model_name(model) -> str:
    """Report name of a loaded model: its variant, or "pinn"."""
    return model.kind if isinstance(model, PINNModel) else model.config.variant


def baseline_method(name: str, config: Dict[str, dict], dataset: Dataset) -> Tuple[Method, Optional[TrainReport]]:
    units = dataset.truth.units
    if name == "inter2d":
        return inter2d_method(units), None
    if name == "as":
        as_config = ASConfig.from_dict(config["baselines"]["adaptive_smoothing"] or {}, units, dataset.cadence)
        return adaptive_smoothing_method(as_config, units), None
    if name == "pinn":
        model = build_estimator("pinn", config, dataset)
        report = fit(model, config, dataset)
        return pinn_method(model), report
    raise ValueError(f"Unknown baseline '{name}', expected one of {BASELINES}")


def metadata(config: Dict[str, dict], dataset: Dataset, run: RunConfig) -> dict:
    return {
        "scenario": dataset.name,
        "seed": int(config["training"]["seed"]),
        "config": str(run.config_path) if run.config_path else "reference",
    }
