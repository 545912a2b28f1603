"""Command-line application factory and logging setup for geotrade."""

import logging
from pathlib import Path

import click

from geotrade.commands.analysis import city_ca_cmd, gravity_cmd, network_cmd, trade_ca_cmd
from geotrade.commands.main import EXIT_IO, synth_cmd, validate_cmd
from geotrade.config import load_config_file


logger = logging.getLogger(__name__)

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"
COMMANDS = (validate_cmd, gravity_cmd, trade_ca_cmd, city_ca_cmd, network_cmd, synth_cmd)


def configure_logging(verbosity: int) -> None:
    """Send log records to stderr; -v selects INFO and -vv selects DEBUG."""
    level = logging.WARNING
    if verbosity == 1:
        level = logging.INFO
    elif verbosity >= 2:
        level = logging.DEBUG
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def create_cli() -> click.Group:
    """Create the geotrade command group with every subcommand registered."""

    @click.group(context_settings={"help_option_names": ["-h", "--help"]})
    @click.option("-v", "--verbose", count=True, help="Increase log verbosity (-v, -vv).")
    @click.option(
        "--config",
        "config_path",
        envvar="GEOTRADE_CONFIG",
        type=click.Path(dir_okay=False),
        default=None,
        help="Flat KEY=VALUE file supplying option defaults.",
    )
    @click.pass_context
    def cli(ctx: click.Context, verbose: int, config_path) -> None:
        """Gravity, correspondence and ownership-network analyses of bilateral economic flows."""
        configure_logging(verbose)
        if config_path:
            if not Path(config_path).is_file():
                logger.error("Config file %s does not exist", config_path)
                ctx.exit(EXIT_IO)
            settings = load_config_file(config_path)
            # Every subcommand sees the same flat settings; unknown keys are ignored.
            ctx.default_map = {name: dict(settings) for name in cli.commands}

    for command in COMMANDS:
        cli.add_command(command)
    return cli
