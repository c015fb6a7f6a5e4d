# services/simulator.py
"""
Seeded stochastic runs of the cookie and Topics API algorithms, Monte Carlo
channel estimation, the counting experiment, and multi-epoch channels.

All randomness comes from counter-based Philox generators, so a seed gives
the same stream on every platform.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from services.qif import Channel, Label, bayes_capacity, guard_size, make_channel, pair_label, parallel
from services.topics_model import (
    IN_SET,
    OUT_OF_SET,
    CookieWorld,
    CountingParams,
    TopicAssignment,
    TopicsParams,
    topics_privacy_channel,
    topics_utility_channel,
    topset_label,
)
from utils.config import settings
from utils.errors import BadParams, EmptyLabelSet, EmptyTopSet, LabelMismatch, ParamMismatch

logger = logging.getLogger(__name__)

COUNTING_CHUNK = 100_000
SESSION_START = datetime(2006, 3, 1)

Sampler = Callable[[Label, np.random.Generator, int], Sequence[Label]]


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed: int, n: int) -> List[np.random.Generator]:
    """Independent sub-streams of one seed; the list depends only on (seed, n)."""
    return [np.random.Generator(np.random.Philox(child)) for child in np.random.SeedSequence(seed).spawn(n)]


def _progress_enabled(progress: Optional[bool]) -> bool:
    return settings.progress if progress is None else progress


# -- third-party cookies ---------------------------------------------------


@dataclass(frozen=True)
class CookieReport:
    user: str  # ground truth, never exported
    uid: str
    origin: str
    context: str
    timestamp: datetime


@dataclass
class CookieLog:
    reports: List[CookieReport]
    cookies: Dict[Tuple[str, str], str] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [(r.uid, r.origin, r.context, r.timestamp.isoformat()) for r in self.reports],
            columns=["uid", "origin", "context", "timestamp"],
        )

    def to_csv(self) -> str:
        return self.to_frame().to_csv(index=False, lineterminator="\n")


def simulate_cookie_session(
    world: CookieWorld,
    rng: np.random.Generator,
    origins: Sequence[str] = ("tracker.tld",),
    users: Optional[Sequence[str]] = None,
) -> CookieLog:
    """
    Every user visits h distinct contexts, each embedding every third-party
    origin. An origin sets a uid on first contact and reads it back afterwards.
    """
    users = list(users) if users is not None else [f"user-{i:04d}" for i in range(world.n_users)]
    if len(users) != world.n_users:
        raise BadParams(f"{len(users)} user labels for N={world.n_users}")
    contexts = [f"context-{j:03d}.tld" for j in range(world.n_contexts)]
    log = CookieLog(reports=[])
    for user, h in zip(users, world.sizes()):
        visited = rng.choice(world.n_contexts, size=h, replace=False)
        for step, j in enumerate(visited):
            timestamp = SESSION_START + timedelta(seconds=int(step))
            for origin in origins:
                key = (user, origin)
                if key not in log.cookies:
                    log.cookies[key] = f"{int(rng.integers(0, 2**63)):016x}"
                log.reports.append(CookieReport(user, log.cookies[key], origin, contexts[j], timestamp))
    logger.info("Simulated %d cookie reports for %d users", len(log.reports), len(users))
    return log


def linkage_channel(log: CookieLog, origin: Optional[str] = None) -> Channel:
    """Empirical users -> uids channel rebuilt from a cookie log."""
    reports = [r for r in log.reports if origin is None or r.origin == origin]
    if not reports:
        raise EmptyLabelSet("cookie log has no reports")
    frame = pd.DataFrame({"user": [r.user for r in reports], "uid": [r.uid for r in reports]})
    counts = pd.crosstab(frame["user"], frame["uid"])
    users = list(dict.fromkeys(r.user for r in reports))
    uids = list(dict.fromkeys(r.uid for r in reports))
    counts = counts.reindex(index=users, columns=uids, fill_value=0).to_numpy(dtype=float)
    return make_channel(users, uids, counts / counts.sum(axis=1, keepdims=True))


# -- Topics API reports --------------------------------------------------


def sample_reported_topics(
    top_s: Iterable[str],
    taxonomy: Sequence[str],
    r: float,
    rng: np.random.Generator,
    size: int,
) -> np.ndarray:
    top = sorted(set(top_s))
    if not top:
        raise EmptyTopSet("top-s set is empty")
    topics = sorted(taxonomy)
    missing = set(top) - set(topics)
    if missing:
        raise LabelMismatch(f"top-s topics {sorted(missing)} are not in the taxonomy")
    random_topic = rng.random(size) < r
    from_taxonomy = np.asarray(topics, dtype=object)[rng.integers(0, len(topics), size)]
    from_top = np.asarray(top, dtype=object)[rng.integers(0, len(top), size)]
    return np.where(random_topic, from_taxonomy, from_top)


def sample_reported_topic(top_s: Iterable[str], taxonomy: Sequence[str], r: float, rng: np.random.Generator) -> str:
    """One report: uniform over the top-s set, overridden with probability r by a uniform taxonomy topic."""
    return str(sample_reported_topics(top_s, taxonomy, r, rng, 1)[0])


def topics_sampler(assignment_topsets: Dict[str, Sequence[str]], taxonomy: Sequence[str], r: float) -> Sampler:
    """Sampler keyed by top-set label, for estimate_channel."""
    def sample(row: Label, rng: np.random.Generator, size: int) -> Sequence[Label]:
        return sample_reported_topics(assignment_topsets[row], taxonomy, r, rng, size)
    return sample


def counting_sampler(cp: CountingParams) -> Sampler:
    def sample(row: Label, rng: np.random.Generator, size: int) -> Sequence[Label]:
        p = cp.p if row == IN_SET else cp.q
        return np.where(rng.random(size) < p, IN_SET, OUT_OF_SET)
    return sample


@dataclass(frozen=True)
class EmpiricalChannel:
    channel: Channel
    stderr: np.ndarray
    trials_per_row: int


def estimate_channel(
    sampler: Sampler,
    row_labels: Sequence[Label],
    col_labels: Sequence[Label],
    trials_per_row: int,
    rng: np.random.Generator,
) -> EmpiricalChannel:
    if trials_per_row < 1:
        raise BadParams("trials_per_row must be at least 1")
    col_index = {y: j for j, y in enumerate(col_labels)}
    counts = np.zeros((len(row_labels), len(col_labels)))
    for i, row in enumerate(row_labels):
        outputs, freq = np.unique(np.asarray(sampler(row, rng, trials_per_row), dtype=object), return_counts=True)
        for y, n in zip(outputs, freq):
            if y not in col_index:
                raise LabelMismatch(f"sampler returned unknown output {y!r}")
            counts[i, col_index[y]] = n
    freqs = counts / trials_per_row
    stderr = np.sqrt(freqs * (1.0 - freqs) / trials_per_row)
    return EmpiricalChannel(make_channel(row_labels, col_labels, freqs), stderr, trials_per_row)


# -- counting experiment --------------------------------------------------


@dataclass(frozen=True)
class CountingEstimate:
    seed: int
    trials: int
    estimate: float
    stderr: float
    partitions: int
    n_users: int

    def to_report(self) -> Dict[str, float]:
        return {
            "seed": self.seed,
            "trials": self.trials,
            "estimate": self.estimate,
            "stderr": self.stderr,
            "partitions": self.partitions,
            "n_users": self.n_users,
        }


def _count_hits(
    rng: np.random.Generator,
    trials: int,
    n_users: int,
    cp: CountingParams,
    membership: float,
    true_count: Optional[int],
    bar: Optional[tqdm],
) -> int:
    hits = 0
    remaining = trials
    while remaining > 0:
        chunk = min(COUNTING_CHUNK, remaining)
        if true_count is None:
            truth = rng.binomial(n_users, membership, chunk)
        else:
            truth = np.full(chunk, true_count)
        noisy = rng.binomial(truth, cp.p) + rng.binomial(n_users - truth, cp.q)
        hits += int(np.count_nonzero(noisy == truth))
        remaining -= chunk
        if bar is not None:
            bar.update(chunk)
    return hits


def run_counting_experiment(
    n_users: int,
    cp: CountingParams,
    trials: int,
    seed: int = 0,
    membership: float = 0.5,
    true_count: Optional[int] = None,
    partitions: int = 1,
    progress: Optional[bool] = None,
) -> CountingEstimate:
    """
    Fraction of trials where the analyst's noisy count of a topic equals the
    true count. Each user holds the topic with probability `membership`,
    unless `true_count` fixes the number of holders.
    """
    if trials < 1 or n_users < 1 or partitions < 1:
        raise BadParams("trials, N and partitions must be at least 1")
    if true_count is not None and not 0 <= true_count <= n_users:
        raise BadParams(f"true count {true_count} outside [0, {n_users}]")
    shares = [trials // partitions + (1 if i < trials % partitions else 0) for i in range(partitions)]
    rngs = spawn_rngs(seed, partitions)

    bar = tqdm(total=trials, desc="counting", unit="trial", disable=not _progress_enabled(progress), leave=False)
    try:
        if settings.workers > 1 and partitions > 1:
            with ThreadPoolExecutor(max_workers=settings.workers) as pool:
                hits = sum(pool.map(
                    lambda job: _count_hits(job[0], job[1], n_users, cp, membership, true_count, None),
                    zip(rngs, shares),
                ))
            bar.update(trials)
        else:
            hits = sum(_count_hits(g, n, n_users, cp, membership, true_count, bar) for g, n in zip(rngs, shares))
    finally:
        bar.close()

    estimate = hits / trials
    stderr = math.sqrt(estimate * (1.0 - estimate) / trials)
    logger.info("Counting N=%d: %d/%d correct (%.6f +/- %.6f)", n_users, hits, trials, estimate, stderr)
    return CountingEstimate(seed, trials, estimate, stderr, partitions, n_users)


# -- multiple epochs --------------------------------------------------------


@dataclass(frozen=True)
class EpochWorld:
    epochs: Tuple[TopicAssignment, ...]
    params: Tuple[TopicsParams, ...]

    def __post_init__(self) -> None:
        if not self.epochs:
            raise BadParams("an epoch world needs at least one epoch")
        if len(self.params) != len(self.epochs):
            raise ParamMismatch(f"{len(self.params)} parameter sets for {len(self.epochs)} epochs")
        users = set(self.epochs[0].histories)
        taxonomy = self.epochs[0].taxonomy
        for i, epoch in enumerate(self.epochs[1:], start=1):
            if set(epoch.histories) != users:
                raise ParamMismatch(f"epoch {i} covers a different set of users")
            if epoch.taxonomy != taxonomy:
                raise ParamMismatch(f"epoch {i} uses a different taxonomy")

    @classmethod
    def repeated(cls, assignment: TopicAssignment, params: TopicsParams, n: int) -> "EpochWorld":
        return cls(tuple([assignment] * n), tuple([params] * n))

    @property
    def users(self) -> Tuple[str, ...]:
        return self.epochs[0].histories


def _aligned(assignment: TopicAssignment, users: Sequence[str]) -> TopicAssignment:
    return TopicAssignment(topsets={u: assignment.topsets[u] for u in users}, taxonomy=assignment.taxonomy)


def multi_epoch_channels(world: EpochWorld) -> Tuple[Channel, Channel]:
    """
    Privacy channel: users -> one report per epoch (parallel composition).
    Utility channel: each user's tuple of per-epoch top-sets -> one report per epoch.

    Only the top-set tuples some user actually holds become utility rows; each
    row is the outer product of that tuple's per-epoch report rows.
    """
    users = world.users
    epochs = [_aligned(a, users) for a in world.epochs]

    privacy = topics_privacy_channel(epochs[0], world.params[0])
    for assignment, params in zip(epochs[1:], world.params[1:]):
        privacy = parallel(privacy, topics_privacy_channel(assignment, params))

    per_epoch = [topics_utility_channel(a, p) for a, p in zip(epochs, world.params)]
    keys = list(dict.fromkeys(tuple(topset_label(a.topsets[u]) for a in epochs) for u in users))
    cols = per_epoch[0].col_labels
    for channel in per_epoch[1:]:
        cols = [pair_label(y, z) for y in cols for z in channel.col_labels]
    guard_size(len(keys), len(cols), "multi-epoch utility channel")

    entries = np.ones((len(keys), 1))
    for i, channel in enumerate(per_epoch):
        block = np.stack([channel.row(key[i]) for key in keys])
        entries = np.einsum("ij,ik->ijk", entries, block).reshape(len(keys), -1)
    rows = [key if len(key) > 1 else key[0] for key in keys]
    utility = make_channel(rows, cols, entries)

    logger.info(
        "%d epochs: privacy %dx%d (capacity %.4f), utility %dx%d",
        len(epochs), *privacy.shape, bayes_capacity(privacy), *utility.shape,
    )
    return privacy, utility
