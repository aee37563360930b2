import logging

import click
import numpy as np

from commands.common import (
    VARIANTS,
    build_estimator,
    cli_errors,
    fit,
    load_dataset,
    load_model,
    model_method,
    run_config,
)
from data.domain import Lattice
from evaluation.heatmap import export_heatmap
from utils.manifest import write_manifest

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "model.ckpt"


def register_train_commands(cli: click.Group) -> None:
    """Attach train and estimate."""

    @cli.command("train")
    @click.option("--variant", type=click.Choice(VARIANTS), default="extended", show_default=True)
    @click.pass_context
    @cli_errors
    def train_command(ctx: click.Context, variant: str):
        """Train a model variant and write its checkpoint and training report."""
        run, config = run_config(ctx, "train")
        dataset = load_dataset(config)
        model = build_estimator(variant, config, dataset)
        checkpoint = run.out / CHECKPOINT_NAME
        report = fit(model, config, dataset, checkpoint)
        report_path = report.write(run.out / "train_report.json")
        write_manifest(
            run.out, f"train --variant {variant}", config, [checkpoint, report_path], dataset.inputs, run.seed
        )
        click.echo(
            f"{variant}: {report.epochs} epochs, {report.steps} steps, best epoch {report.best_epoch}, "
            f"{report.wall_time:.1f}s"
        )

    @cli.command("estimate")
    @click.option("--checkpoint", required=True, type=click.Path(exists=True, dir_okay=False))
    @click.option("--sample", "index", type=int, default=0, show_default=True, help="Test window index")
    @click.pass_context
    @cli_errors
    def estimate_command(ctx: click.Context, checkpoint: str, index: int):
        """Estimate the full stretch over one test window and export estimate/truth/error grids."""
        run, config = run_config(ctx, "estimate")
        dataset = load_dataset(config)
        model = load_model(checkpoint, dataset)
        if not 0 <= index < len(dataset.test):
            raise click.BadParameter(f"test split has {len(dataset.test)} windows", param_hint="--sample")
        sample = dataset.test[index]
        domain = dataset.truth.domain
        rows = sample.anchor_row + np.arange(int(round(sample.span / domain.dt)) + 1)
        lattice = Lattice(
            positions=tuple(float(x) for x in domain.cell_centers()),
            times=tuple(float(r * domain.dt) for r in rows),
        )
        estimate = model_method(model)(sample, lattice)
        paths = export_heatmap(estimate, dataset.truth, run.out / f"estimate_t{sample.t0:g}")
        write_manifest(run.out, "estimate", config, list(paths.values()), [checkpoint, *dataset.inputs], run.seed)
        click.echo(f"Wrote {paths['estimate']}")
