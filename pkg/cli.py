# cli.py
import json
import logging
import sys

import click
from dotenv import load_dotenv
from pydantic import ValidationError

from handlers.analyze import analyze_command
from handlers.counting import counting_curve_command
from handlers.simulate import simulate_command
from handlers.synth import gen_synth_command
from handlers.theory import theory_command
from utils.config import settings
from utils.errors import InvariantViolation, ScopeError

load_dotenv()

EXIT_USAGE = 2
EXIT_INVARIANT = 3

logger = logging.getLogger(__name__)


def _fail(code: str, message: str, exit_code: int) -> None:
    click.echo(json.dumps({"error": code, "message": message}), err=True)
    raise click.exceptions.Exit(exit_code)


def _validation_message(error: ValidationError) -> str:
    parts = []
    for item in error.errors():
        where = ".".join(str(p) for p in item.get("loc", ())) or "value"
        parts.append(f"{where}: {item.get('msg', 'invalid')}")
    return "; ".join(parts)


class ScopeGroup(click.Group):
    """Maps service errors to exit codes and a JSON error line on stderr."""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except InvariantViolation as e:
            logger.error("Invariant violated: %s", e)
            _fail(e.code, str(e), EXIT_INVARIANT)
        except ScopeError as e:
            _fail(e.code, str(e), EXIT_USAGE)
        except ValidationError as e:
            _fail("invalid_parameters", _validation_message(e), EXIT_USAGE)
        except click.UsageError as e:
            _fail("usage", e.format_message(), EXIT_USAGE)


@click.group(cls=ScopeGroup)
@click.option("--verbose", "-v", is_flag=True, help="Debug logging.")
def cli(verbose: bool) -> None:
    """Privacy and utility analysis of third-party cookies and the Topics API."""
    level = logging.DEBUG if verbose else getattr(logging, settings.log_level, logging.INFO)
    logging.basicConfig(
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        level=level,
        stream=sys.stderr,
    )


cli.add_command(theory_command)
cli.add_command(analyze_command)
cli.add_command(counting_curve_command)
cli.add_command(simulate_command)
cli.add_command(gen_synth_command)


def main() -> None:
    cli()


if __name__ == "__main__":
    main()
