from builtins import str
import click

from app.commands import harness_commands
from app.utils.common import setup_logging


@click.group(help="ICS waveform-structure simulator with Q-learning and dueling double-DQN agents.")
@click.version_option("0.1.0", prog_name="ics-sim")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              default=None, help="Overrides ICS_LOG_LEVEL for the 'app' logger.")
def cli(log_level: str):
    setup_logging(log_level)


cli.add_command(harness_commands.run)
cli.add_command(harness_commands.train)
cli.add_command(harness_commands.evaluate_command)
cli.add_command(harness_commands.convergence)
cli.add_command(harness_commands.check)


if __name__ == "__main__":
    cli()
