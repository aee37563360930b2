import logging
from pathlib import Path
from typing import Dict, List

import click
import numpy as np

from commands.common import (
    BASELINES,
    Dataset,
    baseline_method,
    build_estimator,
    cli_errors,
    fit,
    load_dataset,
    load_model,
    metadata,
    model_method,
    model_name,
    run_config,
)
from config.defaults import EVALUATION_DEFAULTS
from config.loader import RunConfig
from data.domain import Lattice
from evaluation.harness import Method, evaluate_method, sensor_sensitivity_sweep
from evaluation.heatmap import export_heatmap
from utils.manifest import write_manifest

logger = logging.getLogger(__name__)

SWEEP_METHODS = ("extended", "vanilla") + BASELINES


def _evaluation_settings(config: Dict[str, dict]) -> dict:
    unknown = set(config["evaluation"]) - set(EVALUATION_DEFAULTS)
    if unknown:
        raise ValueError(f"Unknown evaluation keys: {sorted(unknown)}")
    return {**EVALUATION_DEFAULTS, **config["evaluation"]}


def _score(name: str, method: Method, dataset: Dataset, config: Dict[str, dict], run: RunConfig):
    settings = _evaluation_settings(config)
    return evaluate_method(
        name,
        method,
        dataset.test,
        dataset.layout,
        dataset.truth,
        metadata=metadata(config, dataset, run),
        bin_width=float(settings["bin_width"]),
        overflow=float(settings["overflow"]),
    )


def _heatmaps(method: Method, dataset: Dataset, prefix: Path) -> List[Path]:
    """Full-stretch estimate over the first test window."""
    sample = dataset.test[0]
    domain = dataset.truth.domain
    rows = sample.anchor_row + np.arange(int(round(sample.span / domain.dt)) + 1)
    lattice = Lattice(
        positions=tuple(float(x) for x in domain.cell_centers()),
        times=tuple(float(r * domain.dt) for r in rows),
    )
    return list(export_heatmap(method(sample, lattice), dataset.truth, prefix).values())


def register_evaluate_commands(cli: click.Group) -> None:
    """Attach evaluate, baseline and sweep."""

    @cli.command("evaluate")
    @click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
    @click.pass_context
    @cli_errors
    def evaluate_command(ctx: click.Context, checkpoint: str):
        """Score a trained checkpoint at the evaluation sensors of the test split."""
        run, config = run_config(ctx, "evaluate")
        dataset = load_dataset(config)
        model = load_model(checkpoint, dataset)
        method = model_method(model)
        report = _score(model_name(model), method, dataset, config, run)
        outputs = [report.write(run.out / "report.json")]
        outputs += _heatmaps(method, dataset, run.out / "heatmap")
        write_manifest(run.out, "evaluate", config, outputs, [checkpoint, *dataset.inputs], run.seed)
        click.echo(report.summary())

    @cli.command("baseline")
    @click.option("--method", "name", type=click.Choice(BASELINES), required=True)
    @click.pass_context
    @cli_errors
    def baseline_command(ctx: click.Context, name: str):
        """Run one comparison method and score it like a trained model."""
        run, config = run_config(ctx, "baseline")
        dataset = load_dataset(config)
        method, train_report = baseline_method(name, config, dataset)
        report = _score(name, method, dataset, config, run)
        outputs = [report.write(run.out / f"report_{name}.json")]
        if train_report is not None:
            outputs.append(train_report.write(run.out / f"train_report_{name}.json"))
        outputs += _heatmaps(method, dataset, run.out / f"heatmap_{name}")
        write_manifest(run.out, f"baseline --method {name}", config, outputs, dataset.inputs, run.seed)
        click.echo(report.summary())

    @cli.command("sweep")
    @click.option("--method", "name", type=click.Choice(SWEEP_METHODS), default="extended", show_default=True)
    @click.pass_context
    @cli_errors
    def sweep_command(ctx: click.Context, name: str):
        """Train and evaluate once per input-sensor count (evaluation.sweep_counts)."""
        run, config = run_config(ctx, "sweep")
        counts = [int(c) for c in _evaluation_settings(config)["sweep_counts"]]
        base = load_dataset(config)

        def run_count(layout):
            dataset = load_dataset(config, input_count=layout.n_inputs)
            if name in ("extended", "vanilla"):
                model = build_estimator(name, config, dataset)
                fit(model, config, dataset)
                method = model_method(model)
            else:
                method, _ = baseline_method(name, config, dataset)
            return _score(name, method, dataset, config, run)

        reports = sensor_sensitivity_sweep(run_count, base.layout, counts)
        outputs = [report.write(run.out / f"report_{name}_W{count}.json") for count, report in reports.items()]
        write_manifest(run.out, f"sweep --method {name}", config, outputs, base.inputs, run.seed)
        for report in reports.values():
            click.echo(report.summary())
