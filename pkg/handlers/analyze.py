# handlers/analyze.py
import logging
from pathlib import Path
from typing import Optional

import click
import pandas as pd

from handlers.common import RunConfig, output_options, seed_option, write_document
from services.analysis import analyze
from services.pipeline import (
    TreatmentConfig,
    build_epoch_assignments,
    build_model_inputs,
    dump_profiles,
    ingest_history,
    load_classification,
    load_taxonomy,
    prepare_profiles,
)
from services.suffixes import PublicSuffixList
from utils.errors import NoEligibleUsers
from utils.formatter import emit, render
from utils.taxonomies import DEFAULT_R, DEFAULT_S

logger = logging.getLogger(__name__)

InputPath = click.Path(dir_okay=False, path_type=Path)


@click.command("analyze")
@click.option("--history", type=InputPath, required=True, help="CSV with user_id,timestamp,url_or_domain.")
@click.option("--classification", type=InputPath, required=True, help="CSV with domain,topics.")
@click.option("--suffixes", type=InputPath, required=True, help="Public-suffix list file.")
@click.option("--taxonomy", type=InputPath, default=None, help="One topic per line; default: topics seen in the classification.")
@click.option("--s", "--s-size", "s", type=int, default=DEFAULT_S, show_default=True)
@click.option("--r", "r", type=float, default=DEFAULT_R, show_default=True)
@click.option("--keep-singletons", is_flag=True, help="Keep users who visited a single domain.")
@click.option("--outlier-max-visits", type=int, default=None, help="Drop users with more visits than this.")
@click.option("--insufficient", type=click.Choice(["drop", "error"]), default="drop", show_default=True)
@click.option("--extend-suffixes", is_flag=True, help="Add retired TLDs to the suffix list.")
@click.option("--epochs", type=int, default=1, show_default=True, help="Number of epochs for the longitudinal channels.")
@click.option("--epoch-days", type=float, default=7.0, show_default=True)
@click.option("--dump-profiles", "profiles_path", type=click.Path(dir_okay=False, path_type=Path), default=None, help="Write per-user JSON lines.")
@seed_option
@output_options(default_format="json")
def analyze_command(
    history: Path,
    classification: Path,
    suffixes: Path,
    taxonomy: Optional[Path],
    s: int,
    r: float,
    keep_singletons: bool,
    outlier_max_visits: Optional[int],
    insufficient: str,
    extend_suffixes: bool,
    epochs: int,
    epoch_days: float,
    profiles_path: Optional[Path],
    seed: int,
    fmt: str,
    out: Optional[Path],
) -> None:
    """Privacy and utility of third-party cookies and the Topics API on a browsing dataset."""
    inputs = {"history": history, "classification": classification, "suffixes": suffixes}
    if taxonomy is not None:
        inputs["taxonomy"] = taxonomy
    treatment = TreatmentConfig(
        s=s,
        drop_singletons=not keep_singletons,
        outlier_max_visits=outlier_max_visits,
        insufficient_topics_policy=insufficient,
    )
    RunConfig(command="analyze", inputs=inputs, treatment=treatment, seed=seed, out=out, fmt=fmt)
    if epochs < 1 or epoch_days <= 0:
        raise click.BadParameter("--epochs must be at least 1 and --epoch-days positive")

    psl = PublicSuffixList.from_file(suffixes, extend_discontinued=extend_suffixes)
    topics = load_taxonomy(taxonomy.read_text(encoding="utf-8")) if taxonomy is not None else None
    with open(classification, encoding="utf-8") as f:
        classified = load_classification(f, topics)
    with open(history, encoding="utf-8") as f:
        ingested = ingest_history(f, psl)

    profiles, stats = prepare_profiles(ingested.records, classified, treatment)
    stats = {"rows_in": ingested.rows_in, **{f"rejected_{k}": v for k, v in ingested.rejects.items()}, **stats}
    try:
        model_inputs = build_model_inputs(profiles, classified, r=r)
    except NoEligibleUsers as e:
        raise NoEligibleUsers(f"{e} (pipeline counts: {stats})") from e

    if profiles_path is not None:
        emit(dump_profiles(profiles), profiles_path)
        logger.info("Wrote %d profiles to %s", len(profiles), profiles_path)

    epoch_assignments = None
    if epochs > 1:
        epoch_assignments = build_epoch_assignments(
            ingested.records, classified, treatment, pd.Timedelta(days=epoch_days), n_epochs=epochs
        )

    n_contexts = len({record.domain for p in profiles for record in p.history})
    report = analyze(model_inputs, n_contexts, epoch_assignments, stats)

    if fmt == "json":
        write_document(report, out)
        return
    text = render(report.privacy, fmt) + "\n" + render(report.utility, fmt)
    if report.epochs:
        text += "\n" + render(report.epochs, fmt)
    written = emit(text, out)
    if written is None:
        click.echo(text.rstrip("\n"))
