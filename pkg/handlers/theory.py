# handlers/theory.py
import logging
from dataclasses import asdict
from pathlib import Path
from typing import List, Optional

import click

from handlers.common import RunConfig, output_options, parse_taxonomy_size, seed_option, write_rows
from services.topics_model import (
    TopicsParams,
    capacity_increase,
    grid_params,
    matching_top_set_size,
    theory_table,
)
from utils.taxonomies import DEFAULT_R, DEFAULT_S, GRID_NAMES

logger = logging.getLogger(__name__)

THEORY_COLUMNS = ["m", "r", "s", "avg_capacity", "epsilon", "max_capacity"]


@click.command("theory")
@click.option("--grid", type=click.Choice(GRID_NAMES), default=None, help="Named parameter grid (default table5).")
@click.option("--m", "m", default=None, callback=parse_taxonomy_size, help="Taxonomy size or name for a single row.")
@click.option("--s", "--s-size", "s", type=int, default=DEFAULT_S, show_default=True, help="Top-set size.")
@click.option("--r", "r", type=float, default=DEFAULT_R, show_default=True, help="Random-topic probability.")
@click.option("--compare-to", default=None, callback=parse_taxonomy_size, help="Baseline taxonomy for capacity increase.")
@click.option("--match-s", is_flag=True, help="Also report the top-set size matching the baseline capacity.")
@seed_option
@output_options()
def theory_command(
    grid: Optional[str],
    m: Optional[int],
    s: int,
    r: float,
    compare_to: Optional[int],
    match_s: bool,
    seed: int,
    fmt: str,
    out: Optional[Path],
) -> None:
    """Closed-form capacities and epsilon for Topics API parameters."""
    if m is not None and grid is not None:
        raise click.UsageError("--m and --grid are mutually exclusive")
    single = TopicsParams(m=m, s=s, r=r) if m is not None else None
    RunConfig(command="theory", params=single, seed=seed, out=out, fmt=fmt)

    params: List[TopicsParams] = [single] if single is not None else grid_params(grid or "table5")
    rows = [asdict(row) for row in theory_table(params)]
    columns = list(THEORY_COLUMNS)

    if compare_to is not None:
        columns.append("increase_percent")
        for row, p in zip(rows, params):
            baseline = TopicsParams(m=compare_to, s=p.s, r=p.r)
            row["increase_percent"] = capacity_increase(baseline, p)
    if match_s and compare_to is not None:
        columns.append("matching_s")
        for row, p in zip(rows, params):
            baseline = TopicsParams(m=compare_to, s=p.s, r=p.r)
            row["matching_s"] = matching_top_set_size(baseline, p.m, p.r)

    logger.info("Theory table with %d rows", len(rows))
    write_rows(rows, fmt, out, columns)
