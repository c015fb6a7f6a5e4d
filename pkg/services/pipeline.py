# services/pipeline.py
"""
Browsing-history treatment: ingestion, classification join, user filtering
and per-user top-s sets, ending in the inputs of the Topics model.
"""
import io
import json
import logging
from collections import Counter
from dataclasses import dataclass, field, replace
from datetime import datetime
from typing import Dict, Iterable, List, Literal, Mapping, Optional, Sequence, TextIO, Tuple, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict, PositiveInt

from services.qif import Prior, uniform_prior
from services.suffixes import PublicSuffixList, as_suffix_list, normalize_domain, parent_domains
from services.topics_model import TopicAssignment, TopicsParams, canonical_topset
from utils.errors import (
    EmptyClassification,
    IncompleteAssignment,
    InsufficientTopics,
    InvariantViolation,
    MalformedCsv,
    NoEligibleUsers,
    TopicNotInTaxonomy,
    Unparseable,
)
from utils.taxonomies import DEFAULT_R

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = ("user_id", "timestamp", "url_or_domain")
CLASSIFICATION_COLUMNS = ("domain", "topics")
TOPIC_SEPARATOR = ";"

CsvSource = Union[str, TextIO]


@dataclass(frozen=True)
class VisitRecord:
    user_id: str
    timestamp: datetime
    domain: str
    topics: Tuple[str, ...] = ()
    match: Optional[str] = None  # "full" or "partial" once classified


@dataclass(frozen=True)
class Classification:
    domains: Mapping[str, Tuple[str, ...]]
    taxonomy: Tuple[str, ...]

    def __post_init__(self) -> None:
        known = set(self.taxonomy)
        for domain, topics in self.domains.items():
            if not topics:
                raise EmptyClassification(f"domain {domain!r} has no topics")
            missing = [t for t in topics if t not in known]
            if missing:
                raise TopicNotInTaxonomy(f"topics {missing} of {domain!r} are not in the taxonomy")

    def lookup(self, domain: str) -> Tuple[Optional[Tuple[str, ...]], Optional[str]]:
        """Topics of a domain, preferring a full match over the longest classified parent."""
        if domain in self.domains:
            return self.domains[domain], "full"
        for parent in parent_domains(domain):
            if parent in self.domains:
                return self.domains[parent], "partial"
        return None, None


@dataclass
class UserProfile:
    user_id: str
    history: List[VisitRecord]
    topic_counts: Dict[str, int] = field(default_factory=dict)
    top_s: Optional[Tuple[str, ...]] = None

    @property
    def distinct_domains(self) -> int:
        return len({r.domain for r in self.history})


class TreatmentConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    s: PositiveInt = 5
    drop_singletons: bool = True
    outlier_max_visits: Optional[PositiveInt] = None
    insufficient_topics_policy: Literal["drop", "error"] = "drop"


@dataclass
class IngestResult:
    records: List[VisitRecord]
    rejects: Counter
    rows_in: int


@dataclass
class JoinResult:
    records: List[VisitRecord]
    full_matches: int
    partial_matches: int
    unclassified: int


@dataclass
class TreatmentResult:
    profiles: List[UserProfile]
    dropped_singletons: int = 0
    dropped_outliers: int = 0
    dropped_records: int = 0


@dataclass
class ModelInputs:
    assignment: TopicAssignment
    params: TopicsParams
    prior: Prior


def _read_frame(
    source: CsvSource,
    columns: Sequence[str],
    what: str,
    bad_lines: Optional[List[List[str]]] = None,
) -> pd.DataFrame:
    """Reads a CSV as text; with `bad_lines`, rows with too many fields are collected there and skipped."""
    options = {}
    if bad_lines is not None:
        options = {"engine": "python", "on_bad_lines": lambda fields: bad_lines.append(fields)}
    try:
        frame = pd.read_csv(
            io.StringIO(source) if isinstance(source, str) else source,
            dtype=str,
            keep_default_na=False,
            **options,
        ).fillna("")
    except (ValueError, pd.errors.ParserError) as e:
        raise MalformedCsv(f"cannot read {what} CSV: {e}") from e
    frame.columns = [str(c).strip() for c in frame.columns]
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise MalformedCsv(f"{what} CSV is missing columns {missing}")
    return frame


def _check_conservation(rows_in: int, kept: int, dropped: Mapping[str, int], stage: str) -> None:
    if rows_in != kept + sum(dropped.values()):
        raise InvariantViolation(
            f"{stage}: {rows_in} records in, {kept} kept and {sum(dropped.values())} dropped"
        )


def ingest_history(source: CsvSource, suffix_list: Union[PublicSuffixList, Iterable[str]]) -> IngestResult:
    """Reads `user_id,timestamp,url_or_domain` rows; bad rows are counted by reason, not raised."""
    psl = as_suffix_list(suffix_list)
    malformed: List[List[str]] = []
    frame = _read_frame(source, HISTORY_COLUMNS, "history", bad_lines=malformed)
    records: List[VisitRecord] = []
    rejects: Counter = Counter()
    if malformed:
        rejects["malformed"] = len(malformed)
        logger.warning("Skipped %d history rows with too many fields", len(malformed))
    rows_in = len(frame) + len(malformed)

    for row in frame.itertuples(index=False):
        user = str(row.user_id).strip()
        raw = str(row.url_or_domain).strip()
        if not user:
            rejects["no_user"] += 1
            continue
        if not raw:
            rejects["no_url"] += 1
            continue
        # Aware stamps are converted to UTC, naive ones are taken as UTC.
        timestamp = pd.to_datetime(str(row.timestamp).strip(), errors="coerce", utc=True)
        if pd.isna(timestamp):
            rejects["bad_timestamp"] += 1
            continue
        try:
            domain = normalize_domain(raw, psl)
        except Unparseable as e:
            logger.debug("Rejecting %r: %s", raw, e)
            rejects["unparseable"] += 1
            continue
        records.append(VisitRecord(user_id=user, timestamp=timestamp.tz_convert(None).to_pydatetime(), domain=domain))

    _check_conservation(rows_in, len(records), rejects, "ingest")
    logger.info("Ingested %d of %d rows, rejects %s", len(records), rows_in, dict(rejects))
    return IngestResult(records=records, rejects=rejects, rows_in=rows_in)


def load_taxonomy(source: CsvSource) -> Tuple[str, ...]:
    """One topic label per line; blank lines and `#` comments are skipped."""
    text = source if isinstance(source, str) else source.read()
    topics = [line.strip() for line in text.splitlines()]
    return tuple(t for t in topics if t and not t.startswith("#"))


def load_classification(source: CsvSource, taxonomy: Optional[Sequence[str]] = None) -> Classification:
    frame = _read_frame(source, CLASSIFICATION_COLUMNS, "classification")
    domains: Dict[str, Tuple[str, ...]] = {}
    for row in frame.itertuples(index=False):
        domain = str(row.domain).strip().lower().strip(".")
        topics = tuple(dict.fromkeys(t.strip() for t in str(row.topics).split(TOPIC_SEPARATOR) if t.strip()))
        if not domain:
            continue
        if not topics:
            raise EmptyClassification(f"domain {domain!r} has no topics")
        domains[domain] = tuple(dict.fromkeys(domains.get(domain, ()) + topics))
    if not domains:
        raise EmptyClassification("classification has no domains")
    if taxonomy is None:
        taxonomy = sorted({t for topics in domains.values() for t in topics})
    logger.info("Loaded classification of %d domains over %d topics", len(domains), len(taxonomy))
    return Classification(domains=domains, taxonomy=tuple(taxonomy))


def join_classification(records: Sequence[VisitRecord], classification: Classification) -> JoinResult:
    if not classification.domains:
        raise EmptyClassification("classification has no domains")
    annotated: List[VisitRecord] = []
    matches: Counter = Counter()
    for record in records:
        topics, match = classification.lookup(record.domain)
        if topics is None:
            matches["unclassified"] += 1
            continue
        matches[match] += 1
        annotated.append(replace(record, topics=topics, match=match))

    _check_conservation(len(records), len(annotated), {"unclassified": matches["unclassified"]}, "join")
    logger.info(
        "Classified %d records (%d full, %d partial), dropped %d",
        len(annotated), matches["full"], matches["partial"], matches["unclassified"],
    )
    return JoinResult(
        records=annotated,
        full_matches=matches["full"],
        partial_matches=matches["partial"],
        unclassified=matches["unclassified"],
    )


def group_profiles(records: Iterable[VisitRecord]) -> List[UserProfile]:
    """One profile per user, ordered by user label, visits ordered by time."""
    by_user: Dict[str, List[VisitRecord]] = {}
    for record in records:
        by_user.setdefault(record.user_id, []).append(record)
    profiles = []
    for user in sorted(by_user):
        history = sorted(by_user[user], key=lambda r: (r.timestamp, r.domain))
        counts: Counter = Counter()
        for record in history:
            counts.update(record.topics)
        profiles.append(UserProfile(user_id=user, history=history, topic_counts=dict(counts)))
    return profiles


def treat_users(profiles: Sequence[UserProfile], config: TreatmentConfig) -> TreatmentResult:
    result = TreatmentResult(profiles=[])
    for profile in profiles:
        if config.drop_singletons and profile.distinct_domains <= 1:
            result.dropped_singletons += 1
            result.dropped_records += len(profile.history)
            continue
        if config.outlier_max_visits is not None and len(profile.history) > config.outlier_max_visits:
            logger.info("Dropping outlier user %s with %d visits", profile.user_id, len(profile.history))
            result.dropped_outliers += 1
            result.dropped_records += len(profile.history)
            continue
        result.profiles.append(profile)
    logger.info(
        "Kept %d users, dropped %d singletons and %d outliers",
        len(result.profiles), result.dropped_singletons, result.dropped_outliers,
    )
    return result


def rank_topics(topic_counts: Mapping[str, int]) -> List[str]:
    """Topics by count descending, then label ascending."""
    return sorted(topic_counts, key=lambda t: (-topic_counts[t], t))


def compute_top_s(
    profile: UserProfile,
    classification: Optional[Classification],
    config: TreatmentConfig,
) -> Optional[Tuple[str, ...]]:
    """The s most visited topics of a user, or None when the user has fewer and the policy drops."""
    counts = profile.topic_counts or dict(Counter(t for r in profile.history for t in r.topics))
    if classification is not None:
        known = set(classification.taxonomy)
        missing = [t for t in counts if t not in known]
        if missing:
            raise TopicNotInTaxonomy(f"user {profile.user_id} has topics {missing} outside the taxonomy")
    ranked = rank_topics(counts)
    if len(ranked) < config.s:
        if config.insufficient_topics_policy == "error":
            raise InsufficientTopics(
                f"user {profile.user_id} has {len(ranked)} distinct topics, fewer than s={config.s}"
            )
        return None
    return tuple(ranked[: config.s])


def assign_top_sets(
    profiles: Sequence[UserProfile],
    classification: Optional[Classification],
    config: TreatmentConfig,
) -> Tuple[List[UserProfile], int]:
    """Fills `top_s` for every eligible profile; returns the eligible ones and the number dropped."""
    eligible = []
    for profile in profiles:
        profile.top_s = compute_top_s(profile, classification, config)
        if profile.top_s is not None:
            eligible.append(profile)
    dropped = len(profiles) - len(eligible)
    if dropped:
        logger.info("Dropped %d users with fewer than %d topics", dropped, config.s)
    return eligible, dropped


def build_model_inputs(
    profiles: Sequence[UserProfile],
    classification: Classification,
    r: float = DEFAULT_R,
) -> ModelInputs:
    if not profiles:
        raise NoEligibleUsers("no eligible users")
    missing = [p.user_id for p in profiles if p.top_s is None]
    if missing:
        raise IncompleteAssignment(f"users without a top-s set: {missing[:5]}")
    topsets = {p.user_id: canonical_topset(p.top_s) for p in profiles}
    assignment = TopicAssignment(topsets=topsets, taxonomy=classification.taxonomy)
    s = assignment.s
    params = TopicsParams(m=len(classification.taxonomy), s=s, r=r, m_prime=assignment.m_prime())
    logger.info(
        "Model inputs: N=%d, |Sigma|=%d, m=%d, m'=%d",
        len(profiles), len(assignment.distinct_topsets()), params.m, params.m_prime,
    )
    return ModelInputs(assignment=assignment, params=params, prior=uniform_prior(assignment.histories))


def partition_epochs(
    records: Sequence[VisitRecord],
    epoch_length: pd.Timedelta,
    n_epochs: Optional[int] = None,
) -> List[List[VisitRecord]]:
    """Splits visits into consecutive windows starting at the earliest timestamp."""
    if not records:
        return []
    epoch_length = pd.Timedelta(epoch_length)
    if epoch_length <= pd.Timedelta(0):
        raise ValueError("epoch length must be positive")
    start = min(r.timestamp for r in records)
    last = max(int((pd.Timestamp(r.timestamp) - pd.Timestamp(start)) // epoch_length) for r in records)
    count = last + 1 if n_epochs is None else n_epochs
    epochs: List[List[VisitRecord]] = [[] for _ in range(count)]
    for record in records:
        index = int((pd.Timestamp(record.timestamp) - pd.Timestamp(start)) // epoch_length)
        if index < count:
            epochs[index].append(record)
    return epochs


def dump_profiles(profiles: Iterable[UserProfile]) -> str:
    """JSON lines, one user per line."""
    lines = []
    for profile in profiles:
        lines.append(json.dumps({
            "user": profile.user_id,
            "history": [[r.domain, r.timestamp.isoformat()] for r in profile.history],
            "top_s": list(profile.top_s) if profile.top_s is not None else None,
        }))
    return "\n".join(lines) + ("\n" if lines else "")


@dataclass
class PipelineResult:
    inputs: ModelInputs
    profiles: List[UserProfile]
    stats: Dict[str, int]


def prepare_profiles(
    records: Sequence[VisitRecord],
    classification: Classification,
    config: TreatmentConfig,
) -> Tuple[List[UserProfile], Dict[str, int]]:
    joined = join_classification(records, classification)
    treated = treat_users(group_profiles(joined.records), config)
    eligible, insufficient = assign_top_sets(treated.profiles, classification, config)
    stats = {
        "records_classified": len(joined.records),
        "full_matches": joined.full_matches,
        "partial_matches": joined.partial_matches,
        "records_unclassified": joined.unclassified,
        "dropped_singletons": treated.dropped_singletons,
        "dropped_outliers": treated.dropped_outliers,
        "dropped_insufficient_topics": insufficient,
    }
    return eligible, stats


def run_pipeline(
    history: CsvSource,
    classification: Classification,
    suffix_list: Union[PublicSuffixList, Iterable[str]],
    config: TreatmentConfig,
    r: float = DEFAULT_R,
) -> PipelineResult:
    ingested = ingest_history(history, suffix_list)
    profiles, stats = prepare_profiles(ingested.records, classification, config)
    stats = {"rows_in": ingested.rows_in, "records": len(ingested.records), **{f"rejected_{k}": v for k, v in ingested.rejects.items()}, **stats}
    inputs = build_model_inputs(profiles, classification, r=r)
    return PipelineResult(inputs=inputs, profiles=profiles, stats=stats)


def build_epoch_assignments(
    records: Sequence[VisitRecord],
    classification: Classification,
    config: TreatmentConfig,
    epoch_length: pd.Timedelta,
    n_epochs: Optional[int] = None,
) -> List[TopicAssignment]:
    """One assignment per epoch, restricted to users eligible in every epoch."""
    per_epoch: List[Dict[str, Tuple[str, ...]]] = []
    for i, epoch_records in enumerate(partition_epochs(records, epoch_length, n_epochs)):
        profiles, _ = prepare_profiles(epoch_records, classification, config)
        per_epoch.append({p.user_id: canonical_topset(p.top_s) for p in profiles})
        logger.info("Epoch %d: %d visits, %d eligible users", i, len(epoch_records), len(profiles))
    if not per_epoch:
        raise NoEligibleUsers("no eligible users")
    common = sorted(set.intersection(*(set(topsets) for topsets in per_epoch)))
    if not common:
        raise NoEligibleUsers("no user is eligible in every epoch")
    return [
        TopicAssignment(topsets={u: topsets[u] for u in common}, taxonomy=classification.taxonomy)
        for topsets in per_epoch
    ]
