# handlers/simulate.py
import logging
from pathlib import Path
from typing import Optional

import click
import numpy as np

from handlers.common import RunConfig, output_options, seed_option, write_document, write_rows
from services.simulator import (
    estimate_channel,
    linkage_channel,
    make_rng,
    run_counting_experiment,
    simulate_cookie_session,
    topics_sampler,
)
from services.topics_model import (
    CookieWorld,
    TopicsParams,
    counting_exact_probability,
    counting_params,
    topics_report_channel,
    topset_label,
)
from utils.formatter import emit
from utils.taxonomies import DEFAULT_R, DEFAULT_S, TAXONOMIES

logger = logging.getLogger(__name__)

EXPERIMENTS = ("report-topic", "counting", "cookies")


@click.command("simulate")
@click.option("--experiment", type=click.Choice(EXPERIMENTS), default="report-topic", show_default=True)
@click.option("--m", "m", type=int, default=None, help="Taxonomy size (default 5 for report-topic, 349 for counting).")
@click.option("--s", "--s-size", "s", type=int, default=None, help="Top-set size (default 2 for report-topic, 5 for counting).")
@click.option("--r", "r", type=float, default=DEFAULT_R, show_default=True)
@click.option("--trials", type=int, default=1_000_000, show_default=True, help="Draws or trials.")
@click.option("--n-users", type=int, default=None, help="Users (default 10 for counting, 3 for cookies).")
@click.option("--contexts", type=int, default=5, show_default=True, help="Contexts visited, for cookies.")
@click.option("--partitions", type=int, default=1, show_default=True, help="Independent sub-streams for counting.")
@seed_option
@output_options()
def simulate_command(
    experiment: str,
    m: Optional[int],
    s: Optional[int],
    r: float,
    trials: int,
    n_users: Optional[int],
    contexts: int,
    partitions: int,
    seed: int,
    fmt: str,
    out: Optional[Path],
) -> None:
    """Seeded Monte Carlo runs of the report, counting and cookie algorithms."""
    if experiment == "report-topic":
        params = TopicsParams(m=m or 5, s=s or 2, r=r)
        RunConfig(command="simulate", params=params, seed=seed, out=out, fmt=fmt)
        _report_topic(params, trials, seed, fmt, out)
    elif experiment == "counting":
        params = TopicsParams(m=m or TAXONOMIES["google-topics-v1"], s=s or DEFAULT_S, r=r)
        RunConfig(command="simulate", params=params, seed=seed, out=out, fmt=fmt)
        _counting(params, n_users or 10, trials, partitions, seed, out)
    else:
        RunConfig(command="simulate", seed=seed, out=out, fmt=fmt)
        _cookies(CookieWorld(n_users=n_users or 3, n_contexts=contexts), seed, out)


def _report_topic(params: TopicsParams, draws: int, seed: int, fmt: str, out: Optional[Path]) -> None:
    taxonomy = [f"topic-{i:04d}" for i in range(params.m)]
    top = tuple(taxonomy[: params.s])
    label = topset_label(top)
    expected = topics_report_channel([top], params, taxonomy)
    empirical = estimate_channel(topics_sampler({label: top}, taxonomy, params.r), [label], taxonomy, draws, make_rng(seed))

    rows = []
    for j, topic in enumerate(taxonomy):
        freq = float(empirical.channel.entries[0, j])
        stderr = float(empirical.stderr[0, j])
        exp = float(expected.entries[0, j])
        rows.append({
            "topic": topic,
            "in_top_set": topic in top,
            "frequency": freq,
            "stderr": stderr,
            "expected": exp,
            "z": (freq - exp) / stderr if stderr > 0 else 0.0,
        })
    worst = max(abs(row["z"]) for row in rows)
    logger.info("Report-topic simulation: %d draws, worst deviation %.2f sigma", draws, worst)
    write_rows(rows, fmt, out)


def _counting(params: TopicsParams, n_users: int, trials: int, partitions: int, seed: int, out: Optional[Path]) -> None:
    cp = counting_params(params)
    result = run_counting_experiment(n_users, cp, trials, seed=seed, partitions=partitions)
    report = result.to_report()
    report["exact"] = counting_exact_probability(n_users, cp)
    report["m"] = params.m
    write_document(report, out)


def _cookies(world: CookieWorld, seed: int, out: Optional[Path]) -> None:
    log = simulate_cookie_session(world, make_rng(seed))
    linkage = linkage_channel(log)
    identity = bool(np.array_equal(linkage.entries, np.eye(world.n_users)))
    text = log.to_csv()
    written = emit(text, out)
    if written is None:
        click.echo(text.rstrip("\n"))
    logger.info("Cookie log: %d reports, %d uids, identity linkage: %s", len(log.reports), linkage.shape[1], identity)
