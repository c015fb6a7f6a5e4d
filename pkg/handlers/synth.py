# handlers/synth.py
import logging
from pathlib import Path

import click

from handlers.common import RunConfig, seed_option
from services.synth import synth_generate, worked_example

logger = logging.getLogger(__name__)


@click.command("gen-synth")
@click.option("--out", type=click.Path(file_okay=False, path_type=Path), required=True, help="Output directory.")
@click.option("--n-users", type=int, default=100, show_default=True)
@click.option("--n-domains", type=int, default=200, show_default=True)
@click.option("--taxonomy-size", type=int, default=30, show_default=True)
@click.option("--visits-min", type=int, default=2, show_default=True)
@click.option("--visits-max", type=int, default=40, show_default=True)
@click.option("--zipf", "zipf_exponent", type=float, default=1.0, show_default=True, help="Domain popularity exponent.")
@click.option("--worked-example", "use_worked_example", is_flag=True, help="Write the three-user, five-topic example instead.")
@seed_option
def gen_synth_command(
    out: Path,
    n_users: int,
    n_domains: int,
    taxonomy_size: int,
    visits_min: int,
    visits_max: int,
    zipf_exponent: float,
    use_worked_example: bool,
    seed: int,
) -> None:
    """Write a synthetic history, classification, suffix list and taxonomy."""
    RunConfig(command="gen-synth", seed=seed, out=out)
    if use_worked_example:
        dataset = worked_example()
    else:
        dataset = synth_generate(
            seed=seed,
            n_users=n_users,
            n_domains=n_domains,
            taxonomy_size=taxonomy_size,
            visits_per_user=(visits_min, visits_max),
            zipf_exponent=zipf_exponent,
        )
    for name, path in dataset.write(out).items():
        click.echo(str(path))
        logger.debug("Wrote %s", name)
