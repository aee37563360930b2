# cli.py
import logging

import click

from commands.evaluate import register_evaluate_commands
from commands.simulate import register_simulate_commands
from commands.train import register_train_commands


@click.group()
@click.option(
    "--config",
    type=click.Path(exists=True, dir_okay=False),
    default=None,
    help="YAML run configuration (default: the shipped reference benchmark)",
)
@click.option("--out", type=click.Path(file_okay=False), default="runs", show_default=True, help="Output directory")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Global seed")
@click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="Override a config value (repeatable)")
@click.option("--verbose", is_flag=True, help="Debug logging")
@click.pass_context
def cli(ctx: click.Context, config, out, seed, overrides, verbose):
    """Traffic state estimation with physics-informed operator networks."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    ctx.obj = {"config": config, "out": out, "seed": seed, "overrides": overrides}


register_simulate_commands(cli)
register_train_commands(cli)
register_evaluate_commands(cli)


if __name__ == "__main__":
    cli()
