# services/analysis.py
"""
Privacy and utility report for one treated dataset: every pipeline stage is
measured on its channel and set against the closed-form limit.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

from services.pipeline import ModelInputs
from services.qif import (
    Channel,
    Prior,
    bayes_capacity,
    bayes_leakage,
    cascade_all,
    channel_leakage_summary,
    make_prior,
    posterior_bayes_vulnerability,
    posterior_g_vulnerability,
    prior_bayes_vulnerability,
    prior_g_vulnerability,
)
from services.simulator import EpochWorld, multi_epoch_channels
from services.topics_model import (
    CookieWorld,
    TopicAssignment,
    bounded_noise_channel,
    bounded_noise_leakage,
    bounded_noise_of,
    cookies_channel,
    cookies_leakage,
    generalization_bound,
    generalization_channel,
    iba_gain,
    iba_posterior_bounds,
    identity_channel,
    k_anonymity_of,
    topics_epsilon,
    topics_leakage,
    topics_maxcase_capacity,
    topics_report_channel,
    topset_label,
)
from utils.errors import BadWorld, ZeroR

logger = logging.getLogger(__name__)


@dataclass
class StageRow:
    stage: str
    leakage: float
    capacity: float
    formula: Optional[float]
    bound: Optional[float]
    epsilon: Optional[float] = None
    epsilon_bound: Optional[float] = None


@dataclass
class UtilityRow:
    channel: str
    prior_bayes: float
    posterior_bayes: float
    bayes_leakage: float
    prior_iba: Optional[float] = None
    posterior_iba: Optional[float] = None
    iba_leakage: Optional[float] = None
    iba_lower: Optional[float] = None
    iba_upper: Optional[float] = None


@dataclass
class EpochRow:
    epochs: int
    users: int
    privacy_capacity: float
    utility_rows: int
    utility_capacity: float


@dataclass
class AnalysisReport:
    summary: Dict[str, float]
    privacy: List[StageRow]
    utility: List[UtilityRow]
    epochs: List[EpochRow] = field(default_factory=list)
    stats: Dict[str, int] = field(default_factory=dict)


def topset_prior(assignment: TopicAssignment) -> Prior:
    """Share of users holding each distinct top-set."""
    labels = [topset_label(sigma) for sigma in assignment.distinct_topsets()]
    counts = {label: 0 for label in labels}
    for sigma in assignment.topsets.values():
        counts[topset_label(sigma)] += 1
    n = len(assignment.topsets)
    return make_prior(labels, [counts[label] / n for label in labels])


def _stage_row(stage: str, prior: Prior, channel: Channel, formula, bound, epsilon_bound=None) -> StageRow:
    summary = channel_leakage_summary(prior, channel)
    return StageRow(
        stage, summary.leakage, summary.capacity, formula, bound,
        epsilon=summary.epsilon, epsilon_bound=epsilon_bound,
    )


def privacy_rows(inputs: ModelInputs, n_contexts: int) -> List[StageRow]:
    assignment, params, prior = inputs.assignment, inputs.params, inputs.prior
    users = assignment.histories
    topsets = assignment.distinct_topsets()

    c_bh = identity_channel(users)
    c_g = generalization_channel(assignment)
    c_bn = bounded_noise_channel(topsets, assignment.taxonomy)
    c_report = topics_report_channel(topsets, params, assignment.taxonomy)

    cookies = cookies_channel(users)
    try:
        cookie_histories, cookie_bound = cookies_leakage(CookieWorld(n_users=len(users), n_contexts=max(n_contexts, 1)))
    except BadWorld:
        cookie_histories, cookie_bound = None, None

    generalization = cascade_all([c_bh, c_g])
    bounded = cascade_all([c_bh, c_g, c_bn])
    topics = cascade_all([c_bh, c_g, c_report])
    bn_formula, bn_bound = bounded_noise_leakage(params)
    t_formula, t_bound = topics_leakage(params)
    try:
        eps_bound: Optional[float] = topics_epsilon(params)
    except ZeroR:
        eps_bound = None

    return [
        _stage_row("cookies", prior, cookies, cookie_histories, cookie_bound),
        _stage_row("generalization", prior, generalization, float(len(topsets)), generalization_bound(params)),
        _stage_row("bounded_noise", prior, bounded, bn_formula, bn_bound),
        _stage_row("topics", prior, topics, t_formula, t_bound, epsilon_bound=eps_bound),
    ]


def utility_rows(inputs: ModelInputs) -> List[UtilityRow]:
    assignment, params = inputs.assignment, inputs.params
    topsets = assignment.distinct_topsets()
    prior = topset_prior(assignment)
    gain = iba_gain(topsets, assignment.taxonomy)
    labels = prior.labels

    channels = {
        "uids": identity_channel(labels),
        "generalization": identity_channel(labels),
        "bounded_noise": bounded_noise_channel(topsets, assignment.taxonomy),
        "topics": topics_report_channel(topsets, params, assignment.taxonomy),
    }
    rows = []
    iba_prior = prior_g_vulnerability(prior, gain)
    for name, channel in channels.items():
        row = UtilityRow(
            channel=name,
            prior_bayes=prior_bayes_vulnerability(prior),
            posterior_bayes=posterior_bayes_vulnerability(prior, channel),
            bayes_leakage=bayes_leakage(prior, channel),
        )
        # uids name users, not topics: the IBA gain does not apply.
        if name != "uids":
            after = posterior_g_vulnerability(prior, channel, gain)
            row.prior_iba, row.posterior_iba, row.iba_leakage = iba_prior, after, after / iba_prior
        if name == "topics" and params.r < 0.5:
            row.iba_lower, row.iba_upper = iba_posterior_bounds(prior, params, topsets)
        rows.append(row)
    return rows


def epoch_rows(assignments: Sequence[TopicAssignment], inputs: ModelInputs) -> List[EpochRow]:
    params = [inputs.params.model_copy(update={"m_prime": None}) for _ in assignments]
    rows = []
    for k in range(1, len(assignments) + 1):
        world = EpochWorld(tuple(assignments[:k]), tuple(params[:k]))
        privacy, utility = multi_epoch_channels(world)
        rows.append(EpochRow(k, len(world.users), bayes_capacity(privacy), utility.shape[0], bayes_capacity(utility)))
    return rows


def analyze(
    inputs: ModelInputs,
    n_contexts: int,
    epoch_assignments: Optional[Sequence[TopicAssignment]] = None,
    stats: Optional[Dict[str, int]] = None,
) -> AnalysisReport:
    assignment, params = inputs.assignment, inputs.params
    c_g = generalization_channel(assignment)
    c_bn = bounded_noise_channel(assignment.distinct_topsets(), assignment.taxonomy)
    summary = {
        "N": len(assignment.histories),
        "m": params.m,
        "m_prime": params.m_prime,
        "s": params.s,
        "r": params.r,
        "sigma": len(assignment.distinct_topsets()),
        "k": k_anonymity_of(c_g),
        "B": bounded_noise_of(c_bn),
        "contexts": n_contexts,
    }
    try:
        summary["max_capacity_bound"] = topics_maxcase_capacity(params)
    except ZeroR:
        summary["max_capacity_bound"] = None
    logger.info("Analyzing N=%d, |Sigma|=%d, k=%d", summary["N"], summary["sigma"], summary["k"])
    return AnalysisReport(
        summary=summary,
        privacy=privacy_rows(inputs, n_contexts),
        utility=utility_rows(inputs),
        epochs=epoch_rows(epoch_assignments, inputs) if epoch_assignments else [],
        stats=dict(stats or {}),
    )
