"""
Command-Line Entry Point

This module builds the `uda` command group with:
- Logging configuration (stderr, level from settings or --log-level)
- Exit-code translation for every command
- Command registration

Run with `python -m app.main <command> --help`.
"""

import logging

import click

from app.commands import register_commands
from app.core.config import settings
from app.core.exceptions import AppError

logger = logging.getLogger(__name__)


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level.upper()),
        format=settings.LOG_FORMAT,
        force=True,
    )


class ExitCodeGroup(click.Group):
    """
    Maps failures to exit codes: 0 ok, 1 internal error, 2 usage or IO
    problem. The message goes to stderr.
    """

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except (click.exceptions.ClickException, click.exceptions.Exit, click.exceptions.Abort):
            raise
        except AppError as e:
            click.echo(f"Error: {e.detail}", err=True)
            ctx.exit(e.exit_code)
        except OSError as e:
            click.echo(f"Error: {e}", err=True)
            ctx.exit(2)
        except Exception as e:
            logger.exception(f"Unhandled error: {e}")
            click.echo(f"Error: {e}", err=True)
            ctx.exit(1)


@click.group(name="uda", cls=ExitCodeGroup, context_settings={"help_option_names": ["-h", "--help"]})
@click.option(
    "--log-level",
    default=settings.LOG_LEVEL,
    show_default=True,
    type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
    help="Logging level (logs go to stderr).",
)
def cli(log_level: str) -> None:
    """Coarse-to-fine domain adaptation toolkit."""
    configure_logging(log_level)
    logger.debug(f"{settings.PROJECT_NAME} starting")


register_commands(cli)


if __name__ == "__main__":
    cli()
