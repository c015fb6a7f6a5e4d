# handlers/counting.py
import logging
from pathlib import Path
from typing import Optional, Tuple

import click

from handlers.common import RunConfig, output_options, parse_taxonomy_size, seed_option, write_rows
from services.simulator import run_counting_experiment
from services.topics_model import (
    TopicsParams,
    counting_exact_probability,
    counting_expectation,
    counting_params,
)
from utils.errors import BadParams
from utils.taxonomies import DEFAULT_R, DEFAULT_S, TAXONOMIES

logger = logging.getLogger(__name__)

MAX_USERS = 1000


@click.command("counting-curve")
@click.option("--n-min", type=int, default=2, show_default=True)
@click.option("--n-max", type=int, default=30, show_default=True)
@click.option(
    "--m", "m_values", multiple=True, callback=parse_taxonomy_size,
    help="Taxonomy size or name; repeat for several curves (default v1 and v2).",
)
@click.option("--s", "--s-size", "s", type=int, default=DEFAULT_S, show_default=True)
@click.option("--r", "r", type=float, default=DEFAULT_R, show_default=True)
@click.option("--monte-carlo", "trials", type=int, default=0, help="Also estimate each point with this many trials.")
@click.option("--expectation", is_flag=True, help="Add the binomial expectation sum (not a probability).")
@seed_option
@output_options()
def counting_curve_command(
    n_min: int,
    n_max: int,
    m_values: Tuple[int, ...],
    s: int,
    r: float,
    trials: int,
    expectation: bool,
    seed: int,
    fmt: str,
    out: Optional[Path],
) -> None:
    """Probability that an analyst's noisy count of a topic is exact, per number of users."""
    if not 1 <= n_min <= n_max <= MAX_USERS:
        raise BadParams(f"N range must satisfy 1 <= n-min <= n-max <= {MAX_USERS}")
    if trials < 0:
        raise BadParams("--monte-carlo must be non-negative")
    m_values = m_values or (TAXONOMIES["google-topics-v1"], TAXONOMIES["google-topics-v2"])
    RunConfig(command="counting-curve", params=TopicsParams(m=max(m_values), s=s, r=r), seed=seed, out=out, fmt=fmt)

    columns = ["N", "probability", "m"]
    if expectation:
        columns.append("expectation")
    if trials:
        columns += ["mc_estimate", "mc_stderr"]

    rows = []
    for m in m_values:
        cp = counting_params(TopicsParams(m=m, s=s, r=r))
        for n in range(n_min, n_max + 1):
            row = {"N": n, "probability": counting_exact_probability(n, cp), "m": m}
            if expectation:
                row["expectation"] = counting_expectation(n, cp)
            if trials:
                mc = run_counting_experiment(n, cp, trials, seed=seed + n)
                row["mc_estimate"], row["mc_stderr"] = mc.estimate, mc.stderr
            rows.append(row)
    logger.info("Counting curve: %d points", len(rows))
    write_rows(rows, fmt, out, columns)
