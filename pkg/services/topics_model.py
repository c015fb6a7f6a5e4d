# services/topics_model.py
"""
Channels for the third-party cookies and Topics API pipelines, their
closed-form privacy limits, and the utility measures an IBA analyst cares
about (the randomized-response counting experiment and the IBA gain).
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveInt, model_validator
from scipy.special import gammaln, logsumexp

from services.qif import (
    Channel,
    GainMatrix,
    Label,
    Prior,
    cascade_all,
    make_channel,
    make_gain,
    prior_g_vulnerability,
)
from utils.errors import (
    BadParams,
    BadProbability,
    BadWorld,
    EmptyLabelSet,
    IncompleteAssignment,
    MissingMPrime,
    NotDeterministic,
    ParamMismatch,
    TopicNotInTaxonomy,
    ZeroR,
)
from utils.taxonomies import (
    AOL_GRID,
    DEFAULT_R,
    DEFAULT_S,
    GRID_NAMES,
    REBALANCE_S_VALUES,
    TABLE5_GRID,
    TAXONOMIES,
)

logger = logging.getLogger(__name__)

IN_SET = "t in sigma"
OUT_OF_SET = "t not in sigma"

# math.comb is exact; above this size the bound is reported from log-space.
EXACT_BINOMIAL_LIMIT = 64

TopSet = Tuple[str, ...]


class TopicsParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    m: PositiveInt
    s: PositiveInt
    r: float = Field(ge=0.0, le=1.0)
    m_prime: Optional[PositiveInt] = None

    @model_validator(mode="after")
    def _check_sizes(self) -> "TopicsParams":
        if self.s > self.m:
            raise ValueError(f"top-set size s={self.s} exceeds taxonomy size m={self.m}")
        if self.m_prime is not None and self.m_prime > self.m:
            raise ValueError(f"m'={self.m_prime} exceeds taxonomy size m={self.m}")
        return self


class CookieWorld(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_users: PositiveInt
    n_contexts: PositiveInt
    history_sizes: Tuple[int, ...] = ()

    @model_validator(mode="after")
    def _check_histories(self) -> "CookieWorld":
        if self.history_sizes and len(self.history_sizes) != self.n_users:
            raise ValueError("one history size per user is required")
        for h in self.history_sizes:
            if h < 2 or h > self.n_contexts:
                raise ValueError(f"history size {h} outside [2, {self.n_contexts}]")
        return self

    def sizes(self) -> Tuple[int, ...]:
        return self.history_sizes or (self.n_contexts,) * self.n_users


class CountingParams(BaseModel):
    """Randomized-response probabilities; q = 0 is admitted for the noiseless protocol."""

    model_config = ConfigDict(frozen=True)

    p: float
    q: float

    @model_validator(mode="after")
    def _check_order(self) -> "CountingParams":
        if not (0.0 <= self.q < self.p <= 1.0):
            raise ValueError(f"need 0 <= q < p <= 1, got p={self.p}, q={self.q}")
        return self

    @property
    def A(self) -> float:
        return self.p / self.q if self.q > 0 else math.inf


@dataclass(frozen=True)
class TopicAssignment:
    """Top-s set of every browsing history, over a fixed taxonomy."""

    topsets: Mapping[Label, TopSet]
    taxonomy: Tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.taxonomy:
            raise EmptyLabelSet("taxonomy is empty")
        known = set(self.taxonomy)
        sizes = set()
        for history, sigma in self.topsets.items():
            if len(set(sigma)) != len(sigma) or not sigma:
                raise ParamMismatch(f"top-set of {history!r} is empty or repeats a topic")
            missing = [t for t in sigma if t not in known]
            if missing:
                raise TopicNotInTaxonomy(f"topics {missing} of {history!r} are not in the taxonomy")
            sizes.add(len(sigma))
        if len(sizes) > 1:
            raise ParamMismatch(f"top-sets have different sizes {sorted(sizes)}")
        object.__setattr__(self, "topsets", {h: canonical_topset(sigma) for h, sigma in self.topsets.items()})
        object.__setattr__(self, "taxonomy", tuple(self.taxonomy))

    @property
    def histories(self) -> Tuple[Label, ...]:
        return tuple(self.topsets)

    @property
    def s(self) -> int:
        return len(next(iter(self.topsets.values()))) if self.topsets else 0

    def distinct_topsets(self) -> List[TopSet]:
        return dedupe_topsets(self.topsets.values())

    def m_prime(self) -> int:
        return len({t for sigma in self.topsets.values() for t in sigma})


def canonical_topset(topics: Iterable[str]) -> TopSet:
    return tuple(sorted(set(topics)))


def topset_label(sigma: Sequence[str]) -> str:
    return "{" + ", ".join(sigma) + "}"


def dedupe_topsets(topsets: Iterable[Sequence[str]]) -> List[TopSet]:
    """Drops repeated top-sets, keeping first occurrences in order."""
    seen = set()
    result = []
    for sigma in topsets:
        key = canonical_topset(sigma)
        if key not in seen:
            seen.add(key)
            result.append(tuple(sigma))
    return result


def _check_topsets(topsets: Sequence[Sequence[str]], taxonomy: Sequence[str]) -> List[TopSet]:
    if not taxonomy:
        raise EmptyLabelSet("taxonomy is empty")
    topsets = dedupe_topsets(topsets)
    if not topsets:
        raise EmptyLabelSet("no top-sets given")
    known = set(taxonomy)
    for sigma in topsets:
        missing = [t for t in sigma if t not in known]
        if missing:
            raise TopicNotInTaxonomy(f"topics {missing} of {topset_label(sigma)} are not in the taxonomy")
    return topsets


# -- channel builders ---------------------------------------------------------


def identity_channel(labels: Sequence[Label]) -> Channel:
    labels = list(labels)
    if not labels:
        raise EmptyLabelSet("identity channel needs at least one label")
    return make_channel(labels, labels, np.eye(len(labels)))


def generalization_channel(assignment: TopicAssignment, histories: Optional[Sequence[Label]] = None) -> Channel:
    histories = list(histories) if histories is not None else list(assignment.histories)
    missing = [h for h in histories if h not in assignment.topsets]
    if missing:
        raise IncompleteAssignment(f"no top-set for histories {missing[:5]}")
    columns: Dict[str, int] = {}
    for h in histories:
        columns.setdefault(topset_label(assignment.topsets[h]), len(columns))
    entries = np.zeros((len(histories), len(columns)))
    for i, h in enumerate(histories):
        entries[i, columns[topset_label(assignment.topsets[h])]] = 1.0
    return make_channel(histories, list(columns), entries)


def k_anonymity_of(generalization: Channel) -> int:
    entries = generalization.entries
    if not generalization.is_deterministic() or np.any(entries.sum(axis=1) != 1.0):
        raise NotDeterministic("k-anonymity needs a deterministic 0/1 channel")
    counts = entries.sum(axis=0)
    return int(counts[counts > 0].min())


def bounded_noise_of(channel: Channel) -> int:
    """Number of non-zero entries per row; the bound B of a bounded-noise channel."""
    nonzero = np.count_nonzero(channel.entries, axis=1)
    if np.any(nonzero != nonzero[0]):
        raise ParamMismatch("rows have different numbers of non-zero entries")
    return int(nonzero[0])


def bounded_noise_channel(topsets: Sequence[Sequence[str]], taxonomy: Sequence[str]) -> Channel:
    topsets = _check_topsets(topsets, taxonomy)
    col = {t: j for j, t in enumerate(taxonomy)}
    entries = np.zeros((len(topsets), len(taxonomy)))
    for i, sigma in enumerate(topsets):
        for t in sigma:
            entries[i, col[t]] = 1.0 / len(sigma)
    return make_channel([topset_label(sigma) for sigma in topsets], list(taxonomy), entries)


def dp_channel(topsets: Sequence[Sequence[str]], taxonomy: Sequence[str]) -> Channel:
    topsets = _check_topsets(topsets, taxonomy)
    m = len(taxonomy)
    return make_channel([topset_label(sigma) for sigma in topsets], list(taxonomy), np.full((len(topsets), m), 1.0 / m))


def topics_report_channel(topsets: Sequence[Sequence[str]], params: TopicsParams, taxonomy: Sequence[str]) -> Channel:
    """
    Channel of one reported topic given a top-s set: a topic of the set with
    probability (1 - r)/s + r/m, any other topic with probability r/m.
    """
    topsets = _check_topsets(topsets, taxonomy)
    if len(taxonomy) != params.m:
        raise ParamMismatch(f"taxonomy has {len(taxonomy)} topics but m={params.m}")
    wrong = [topset_label(sigma) for sigma in topsets if len(sigma) != params.s]
    if wrong:
        raise ParamMismatch(f"top-sets {wrong[:3]} do not have s={params.s} topics")
    col = {t: j for j, t in enumerate(taxonomy)}
    entries = np.full((len(topsets), params.m), params.r / params.m)
    in_set = (1.0 - params.r) / params.s + params.r / params.m
    for i, sigma in enumerate(topsets):
        for t in sigma:
            entries[i, col[t]] = in_set
    return make_channel([topset_label(sigma) for sigma in topsets], list(taxonomy), entries)


def topics_privacy_channel(assignment: TopicAssignment, params: TopicsParams) -> Channel:
    """Users -> reported topic: identity on histories, generalization, then reporting."""
    histories = assignment.histories
    generalization = generalization_channel(assignment)
    report = topics_report_channel(assignment.distinct_topsets(), params, assignment.taxonomy)
    return cascade_all([identity_channel(histories), generalization, report])


def topics_utility_channel(assignment: TopicAssignment, params: TopicsParams) -> Channel:
    return topics_report_channel(assignment.distinct_topsets(), params, assignment.taxonomy)


def cookies_channel(users: Sequence[Label]) -> Channel:
    """Users -> browsing histories -> uids; both steps are identities."""
    histories = identity_channel(users)
    uids = make_channel(list(users), [f"uid:{u}" for u in users], np.eye(len(users)))
    return cascade_all([histories, uids])


# -- closed forms --------------------------------------------------------------


def _require_contexts(world: CookieWorld) -> int:
    if world.n_contexts < 2:
        raise BadWorld(f"need at least 2 contexts, got {world.n_contexts}")
    return world.n_contexts


def cookie_history_count(n_contexts: int) -> int:
    """Browsing histories of at least two contexts: sum_{h=2}^{c} C(c, h) = 2^c - c - 1."""
    return 2 ** n_contexts - n_contexts - 1


def cookies_posterior_vulnerability(world: CookieWorld) -> float:
    c = _require_contexts(world)
    return cookie_history_count(c) / world.n_users


def cookies_leakage(world: CookieWorld) -> Tuple[float, float]:
    """
    Returns (history count, realizable capacity).

    The history count 2^c - c - 1 is the posterior over prior vulnerability
    under the uniform prior on users; on N users at most min{N, 2^c - c - 1}
    of those histories can be told apart.
    """
    c = _require_contexts(world)
    histories = cookie_history_count(c)
    try:
        count = float(histories)
    except OverflowError:
        count = math.inf
    return count, float(min(world.n_users, histories))


def _require_m_prime(params: TopicsParams) -> int:
    if params.m_prime is None:
        raise MissingMPrime("m' (number of topics that occur) is required")
    return params.m_prime


def topics_leakage(params: TopicsParams) -> Tuple[float, float]:
    m_prime = _require_m_prime(params)
    leakage = params.r + m_prime * (1.0 - params.r) / params.s
    bound = params.r + params.m * (1.0 - params.r) / params.s
    return leakage, bound


def topics_capacity_bound(params: TopicsParams) -> float:
    return params.r + params.m * (1.0 - params.r) / params.s


def topics_posterior_vulnerability(params: TopicsParams, n_users: int) -> Tuple[float, float]:
    leakage, bound = topics_leakage(params)
    return leakage / n_users, bound / n_users


def log_generalization_bound(params: TopicsParams) -> float:
    return float(gammaln(params.m + 1) - gammaln(params.s + 1) - gammaln(params.m - params.s + 1))


def generalization_bound(params: TopicsParams) -> float:
    if params.m <= EXACT_BINOMIAL_LIMIT:
        return float(math.comb(params.m, params.s))
    try:
        return math.exp(log_generalization_bound(params))
    except OverflowError:
        logger.debug("C(%d, %d) overflows a float", params.m, params.s)
        return math.inf


def bounded_noise_leakage(params: TopicsParams) -> Tuple[float, float]:
    m_prime = _require_m_prime(params)
    return m_prime / params.s, params.m / params.s


def _require_r(params: TopicsParams) -> float:
    if params.r <= 0.0:
        raise ZeroR("r = 0: every out-of-set report has probability zero, epsilon is infinite")
    return params.r


def topics_maxcase_capacity(params: TopicsParams) -> float:
    r = _require_r(params)
    return 1.0 + params.m * (1.0 - r) / (r * params.s)


def topics_epsilon(params: TopicsParams) -> float:
    return math.log(topics_maxcase_capacity(params))


# -- IBA gain -----------------------------------------------------------------


def iba_gain(topsets: Sequence[Sequence[str]], taxonomy: Sequence[str]) -> GainMatrix:
    topsets = _check_topsets(topsets, taxonomy)
    gains = np.array([[1.0 if t in sigma else 0.0 for sigma in topsets] for t in taxonomy])
    return make_gain(list(taxonomy), [topset_label(sigma) for sigma in topsets], gains)


def iba_posterior_bounds(
    prior: Prior,
    params: TopicsParams,
    topsets: Sequence[Sequence[str]],
) -> Tuple[float, float]:
    """Lower and upper limits on the posterior IBA vulnerability of the report channel."""
    if params.r >= 0.5:
        raise BadProbability(f"the bounds assume r < 0.5, got r={params.r}")
    topsets = dedupe_topsets(topsets)
    taxonomy = sorted({t for sigma in topsets for t in sigma})
    gain = iba_gain(topsets, taxonomy)
    before = prior_g_vulnerability(prior, gain)
    return 1.0 - params.r, (1.0 - params.r) + params.r * before


# -- counting experiment ----------------------------------------------------


def counting_params(params: TopicsParams) -> CountingParams:
    r = _require_r(params)
    q = r / params.m
    p = (1.0 - r) / params.s + q
    return CountingParams(p=p, q=q)


def randomized_response_channel(p: float, q: float) -> Channel:
    for value in (p, q):
        if not 0.0 <= value <= 1.0:
            raise BadProbability(f"probability {value} outside [0, 1]")
    return make_channel([IN_SET, OUT_OF_SET], [IN_SET, OUT_OF_SET], [[p, 1.0 - p], [q, 1.0 - q]])


def counting_channel(cp: CountingParams) -> Channel:
    return randomized_response_channel(cp.p, cp.q)


def counting_expectation(n_users: int, cp: CountingParams) -> float:
    """
    sum_n C(N, n) p^n (1 - q)^(N - n), evaluated in log-space.

    Equals (p + 1 - q)^N and exceeds 1 whenever p > q; it is not a probability.
    """
    if n_users < 1:
        raise BadParams("N must be at least 1")
    n = np.arange(n_users + 1)
    log_binom = gammaln(n_users + 1) - gammaln(n + 1) - gammaln(n_users - n + 1)
    with np.errstate(divide="ignore"):
        log_terms = log_binom + n * np.log(cp.p) + (n_users - n) * np.log1p(-cp.q)
    return float(np.exp(logsumexp(log_terms)))


def _error_distribution(n_in: int, n_out: int, membership: Optional[float], n_users: int, cp: CountingParams) -> np.ndarray:
    # Distribution of (noisy count - true count), indexed from -n_users.
    if membership is None:
        kernels = [(1.0 - cp.p, cp.p, 0.0)] * n_in + [(0.0, 1.0 - cp.q, cp.q)] * n_out
    else:
        w = membership
        kernel = (w * (1.0 - cp.p), w * cp.p + (1.0 - w) * (1.0 - cp.q), (1.0 - w) * cp.q)
        kernels = [kernel] * n_users
    dist = np.zeros(2 * n_users + 1)
    dist[n_users] = 1.0
    for down, stay, up in kernels:
        nxt = stay * dist
        nxt[:-1] += down * dist[1:]
        nxt[1:] += up * dist[:-1]
        dist = nxt
    return dist


def counting_exact_probability(n_users: int, cp: CountingParams, membership: float = 0.5) -> float:
    """
    Probability that the noisy count of a topic equals its true count when
    each of N users holds the topic independently with probability `membership`.
    """
    if n_users < 1:
        raise BadParams("N must be at least 1")
    if not 0.0 <= membership <= 1.0:
        raise BadProbability(f"membership probability {membership} outside [0, 1]")
    return float(_error_distribution(0, 0, membership, n_users, cp)[n_users])


def counting_probability_given_truth(n_users: int, true_count: int, cp: CountingParams) -> float:
    """P(Bin(K, p) + Bin(N - K, q) = K) for a fixed true count K."""
    if not 0 <= true_count <= n_users:
        raise BadParams(f"true count {true_count} outside [0, {n_users}]")
    return float(_error_distribution(true_count, n_users - true_count, None, n_users, cp)[n_users])


def counting_curve(n_values: Iterable[int], params_list: Sequence[TopicsParams]) -> List[Tuple[int, float, int]]:
    rows = []
    for params in params_list:
        cp = counting_params(params)
        for n in n_values:
            rows.append((n, counting_exact_probability(n, cp), params.m))
    return rows


# -- theory tables -------------------------------------------------------------


@dataclass(frozen=True)
class TheoryRow:
    m: int
    r: float
    s: int
    avg_capacity: float
    epsilon: float
    max_capacity: float


def theory_row(params: TopicsParams) -> TheoryRow:
    return TheoryRow(
        m=params.m,
        r=params.r,
        s=params.s,
        avg_capacity=topics_capacity_bound(params),
        epsilon=topics_epsilon(params),
        max_capacity=topics_maxcase_capacity(params),
    )


def theory_table(params_seq: Iterable[TopicsParams]) -> List[TheoryRow]:
    return [theory_row(params) for params in params_seq]


def capacity_increase(baseline: TopicsParams, candidate: TopicsParams) -> float:
    """Relative change of the average-case capacity, in percent."""
    before = topics_capacity_bound(baseline)
    return 100.0 * (topics_capacity_bound(candidate) - before) / before


def _floor2(value: float) -> float:
    return math.floor(value * 100.0 + 1e-9) / 100.0


def matching_random_probability(target_capacity: float, m: int, s: int) -> float:
    """Largest two-decimal r with r + m(1 - r)/s >= target_capacity."""
    ratio = m / s
    if ratio <= 1.0:
        raise BadParams("no r trades capacity when m <= s")
    r = (ratio - target_capacity) / (ratio - 1.0)
    if not 0.0 <= r <= 1.0:
        raise BadParams(f"target capacity {target_capacity} is out of reach for m={m}, s={s}")
    return _floor2(r)


def rebalance_grid(baseline: TopicsParams, m_new: int, s_values: Iterable[int]) -> List[TopicsParams]:
    target = topics_capacity_bound(baseline)
    grid = []
    for s in s_values:
        r = matching_random_probability(target, m_new, s)
        grid.append(TopicsParams(m=m_new, s=s, r=r))
    return grid


def matching_top_set_size(baseline: TopicsParams, m_new: int, r: float) -> int:
    """Top-set size whose capacity is nearest the baseline capacity."""
    target = topics_capacity_bound(baseline)
    best_s, best_gap = 1, math.inf
    for s in range(1, m_new + 1):
        gap = abs(topics_capacity_bound(TopicsParams(m=m_new, s=s, r=r)) - target)
        if gap < best_gap:
            best_s, best_gap = s, gap
    return best_s


def grid_params(name: str) -> List[TopicsParams]:
    """Named parameter grids: published taxonomies, v2 rebalanced against v1, and the datasets."""
    if name == "table5":
        return [TopicsParams(m=m, s=s, r=r) for m, s, r in TABLE5_GRID]
    if name == "table6":
        baseline = TopicsParams(m=TAXONOMIES["google-topics-v1"], s=DEFAULT_S, r=DEFAULT_R)
        v2 = TAXONOMIES["google-topics-v2"]
        head = [baseline, TopicsParams(m=v2, s=DEFAULT_S, r=DEFAULT_R)]
        return head + rebalance_grid(baseline, v2, REBALANCE_S_VALUES)
    if name == "aol":
        return [TopicsParams(m=m, s=s, r=r) for m, s, r in AOL_GRID]
    raise BadParams(f"unknown grid {name!r}; choose from {', '.join(GRID_NAMES)}")
