import logging
import os
import sys
from typing import Optional

import click
from pythonjsonlogger import jsonlogger

# Add the parent directory to Python path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.commands import COMMANDS
from src.config import settings

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

logger = logging.getLogger(__name__)


def configure_logging(level: Optional[str] = None, fmt: Optional[str] = None) -> None:
    level = (level or settings.log_level).upper()
    handler = logging.StreamHandler(sys.stdout)
    if (fmt or settings.log_format) == "json":
        handler.setFormatter(jsonlogger.JsonFormatter(LOG_FORMAT))
    else:
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
    logging.basicConfig(level=getattr(logging, level), handlers=[handler], force=True)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option(
    "--log-level",
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    help="Overrides HORIZON_LOG_LEVEL",
)
@click.option("--log-format", type=click.Choice(["text", "json"]), help="Overrides HORIZON_LOG_FORMAT")
def cli(log_level: Optional[str], log_format: Optional[str]):
    """Finite- versus infinite-horizon optimal control experiments."""
    configure_logging(log_level, log_format)


for command in COMMANDS:
    cli.add_command(command)


if __name__ == "__main__":
    cli()
