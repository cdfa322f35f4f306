"""expertkm command-line entry point."""

import click

from expertkm import __version__
from expertkm.config import configure_logging
from expertkm.modules.runs.routes import estimate, fit, replay, simulate, study


@click.group()
@click.version_option(__version__, prog_name="expertkm")
@click.option("--verbose", "-v", is_flag=True, help="Log at DEBUG level.")
def cli(verbose: bool):
    """Expert-augmented Kaplan-Meier estimation for contaminated claim data."""
    configure_logging("DEBUG" if verbose else None)


# ==================== COMMAND REGISTRATION ====================
cli.add_command(simulate)
cli.add_command(estimate)
cli.add_command(fit)
cli.add_command(study)
cli.add_command(replay)


if __name__ == "__main__":
    cli()
