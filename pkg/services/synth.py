# services/synth.py
"""Synthetic browsing histories and domain classifications for desk-scale runs."""
import logging
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd

from services.simulator import make_rng
from utils.errors import BadParams

logger = logging.getLogger(__name__)

SYNTH_SUFFIXES = ("com", "net", "org")
SYNTH_START = datetime(2006, 3, 1)
SYNTH_SPAN_SECONDS = 92 * 24 * 3600

HISTORY_FILE = "history.csv"
CLASSIFICATION_FILE = "classification.csv"
SUFFIX_FILE = "suffixes.dat"
TAXONOMY_FILE = "taxonomy.txt"


@dataclass(frozen=True)
class SynthDataset:
    history_csv: str
    classification_csv: str
    suffix_list: str
    taxonomy: str

    def write(self, out_dir: Union[str, Path]) -> Dict[str, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        files = {
            HISTORY_FILE: self.history_csv,
            CLASSIFICATION_FILE: self.classification_csv,
            SUFFIX_FILE: self.suffix_list,
            TAXONOMY_FILE: self.taxonomy,
        }
        written = {}
        for name, text in files.items():
            path = out / name
            path.write_text(text, encoding="utf-8", newline="\n")
            written[name] = path
        return written


def zipf_weights(n: int, exponent: float) -> np.ndarray:
    """Popularity of ranks 1..n proportional to rank^-exponent."""
    weights = np.arange(1, n + 1, dtype=float) ** -exponent
    return weights / weights.sum()


def _csv(frame: pd.DataFrame) -> str:
    return frame.to_csv(index=False, lineterminator="\n")


def synth_generate(
    seed: int,
    n_users: int,
    n_domains: int,
    taxonomy_size: int,
    visits_per_user: Tuple[int, int] = (2, 40),
    zipf_exponent: float = 1.0,
    topics_per_domain: Tuple[int, int] = (1, 3),
) -> SynthDataset:
    """
    Deterministic for a fixed seed. Users draw a uniform number of visits in
    `visits_per_user` (inclusive) over Zipf-popular domains; every domain
    carries between one and three distinct taxonomy topics.
    """
    low, high = visits_per_user
    t_low, t_high = topics_per_domain
    if min(n_users, n_domains, taxonomy_size) < 1:
        raise BadParams("n_users, n_domains and taxonomy_size must be at least 1")
    if low < 1 or high < low:
        raise BadParams(f"bad visits per user range {visits_per_user}")
    if t_low < 1 or t_high < t_low:
        raise BadParams(f"bad topics per domain range {topics_per_domain}")
    if zipf_exponent < 0:
        raise BadParams("zipf exponent must be non-negative")

    rng = make_rng(seed)
    taxonomy = [f"topic-{i:04d}" for i in range(taxonomy_size)]
    domains = [f"site{j:05d}.{SYNTH_SUFFIXES[j % len(SYNTH_SUFFIXES)]}" for j in range(n_domains)]

    classification_rows = []
    for domain in domains:
        k = min(int(rng.integers(t_low, t_high + 1)), taxonomy_size)
        picks = sorted(rng.choice(taxonomy_size, size=k, replace=False))
        classification_rows.append((domain, ";".join(taxonomy[i] for i in picks)))

    visits = rng.integers(low, high + 1, size=n_users)
    weights = zipf_weights(n_domains, zipf_exponent)
    history_rows = []
    for u, n_visits in enumerate(visits):
        picked = rng.choice(n_domains, size=int(n_visits), p=weights)
        offsets = np.sort(rng.integers(0, SYNTH_SPAN_SECONDS, size=int(n_visits)))
        for j, offset in zip(picked, offsets):
            timestamp = (pd.Timestamp(SYNTH_START) + pd.Timedelta(seconds=int(offset))).isoformat()
            history_rows.append((f"u{u:06d}", timestamp, f"http://www.{domains[j]}/"))

    logger.info(
        "Generated %d visits for %d users over %d domains and %d topics (seed %d)",
        len(history_rows), n_users, n_domains, taxonomy_size, seed,
    )
    return SynthDataset(
        history_csv=_csv(pd.DataFrame(history_rows, columns=["user_id", "timestamp", "url_or_domain"])),
        classification_csv=_csv(pd.DataFrame(classification_rows, columns=["domain", "topics"])),
        suffix_list="\n".join(SYNTH_SUFFIXES) + "\n",
        taxonomy="\n".join(taxonomy) + "\n",
    )


# Three users, five topics, two top-2 sets: Alice and Carol share {Music, News},
# Bob alone has {Sports, Travel}; nobody's top-set contains Ads. Five contexts in all.
WORKED_EXAMPLE_TAXONOMY = ("Music", "News", "Sports", "Travel", "Ads")
WORKED_EXAMPLE_HISTORIES = {
    "Alice": ("music.tld", "news.tld", "music.tld"),
    "Bob": ("travel.tld", "flights.tld", "sports.tld"),
    "Carol": ("news.tld", "music.tld"),
}
WORKED_EXAMPLE_CLASSIFICATION = {
    "music.tld": "Music",
    "news.tld": "News",
    "sports.tld": "Sports",
    "travel.tld": "Travel",
    "flights.tld": "Travel",
    "shop.tld": "Ads",
}


def worked_example(start: Optional[datetime] = None) -> SynthDataset:
    start = pd.Timestamp(start or SYNTH_START)
    rows = []
    for user, domains in WORKED_EXAMPLE_HISTORIES.items():
        for step, domain in enumerate(domains):
            rows.append((user, (start + pd.Timedelta(hours=step)).isoformat(), domain))
    return SynthDataset(
        history_csv=_csv(pd.DataFrame(rows, columns=["user_id", "timestamp", "url_or_domain"])),
        classification_csv=_csv(pd.DataFrame(list(WORKED_EXAMPLE_CLASSIFICATION.items()), columns=["domain", "topics"])),
        suffix_list="tld\n",
        taxonomy="\n".join(WORKED_EXAMPLE_TAXONOMY) + "\n",
    )
