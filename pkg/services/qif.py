# services/qif.py
"""
Labeled-channel calculus: priors, channels, gain functions, vulnerabilities,
leakages, capacities and the channel compositions used by every model.

Labels are strings; composite outputs (parallel, Kronecker) carry flat tuples
of strings. Every value is immutable once built.
"""
import logging
import math
from dataclasses import dataclass
from typing import Hashable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from utils.config import settings
from utils.errors import (
    BadProbability,
    ChannelTooLarge,
    DuplicateLabel,
    EmptyLabelSet,
    LabelMismatch,
    NegativeEntry,
    NonStochasticRow,
    ZeroEntry,
    ZeroPriorVulnerability,
)

logger = logging.getLogger(__name__)

Label = Hashable

# Row/column label of the 1x1 identity; vanishes when paired with another label.
UNIT: Tuple = ()


def _freeze(values, shape: Optional[Tuple[int, ...]] = None) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if shape is not None:
        arr = arr.reshape(shape)
    arr.setflags(write=False)
    return arr


def _check_labels(labels: Sequence[Label], axis: str) -> Tuple[Label, ...]:
    labels = tuple(labels)
    if not labels:
        raise EmptyLabelSet(f"{axis}: label set is empty")
    if labels != (UNIT,):
        for label in labels:
            if label is None or label == "" or label == UNIT:
                raise EmptyLabelSet(f"{axis}: empty label")
    if len(set(labels)) != len(labels):
        seen = set()
        dupes = [lb for lb in labels if lb in seen or seen.add(lb)]
        raise DuplicateLabel(f"{axis}: duplicate labels {dupes[:5]}")
    return labels


def guard_size(n_rows: int, n_cols: int, what: str = "channel") -> None:
    """Refuses matrices larger than the configured entry cap."""
    if n_rows * n_cols > settings.max_entries:
        logger.warning("Refusing %s of %d x %d entries (cap %d)", what, n_rows, n_cols, settings.max_entries)
        raise ChannelTooLarge(
            f"{what} would have {n_rows * n_cols} entries, above the cap of {settings.max_entries}"
        )


def pair_label(x: Label, y: Label) -> Label:
    """Joins two labels into a flat tuple; the unit label is absorbed."""
    parts: List[Label] = []
    for part in (x, y):
        if isinstance(part, tuple):
            parts.extend(part)
        else:
            parts.append(part)
    if not parts:
        return UNIT
    if len(parts) == 1:
        return parts[0]
    return tuple(parts)



def _arity(label: Label) -> int:
    return len(label) if isinstance(label, tuple) else 1


def _check_arity(labels: Sequence[Label], what: str) -> None:
    """Flat pairing is only injective when every label on a side has the same arity."""
    arities = {_arity(label) for label in labels}
    if len(arities) > 1:
        raise LabelMismatch(f"{what} mix label arities {sorted(arities)}; cannot pair them into flat tuples")


@dataclass(frozen=True)
class Prior:
    labels: Tuple[Label, ...]
    probs: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)

    def prob(self, label: Label) -> float:
        return float(self.probs[self.labels.index(label)])


@dataclass(frozen=True)
class Channel:
    row_labels: Tuple[Label, ...]
    col_labels: Tuple[Label, ...]
    entries: np.ndarray

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.row_labels), len(self.col_labels)

    def row(self, label: Label) -> np.ndarray:
        return self.entries[self.row_labels.index(label)]

    def entry(self, row: Label, col: Label) -> float:
        return float(self.entries[self.row_labels.index(row), self.col_labels.index(col)])

    def is_deterministic(self) -> bool:
        return bool(np.all((self.entries == 0.0) | (self.entries == 1.0)))


@dataclass(frozen=True)
class GainMatrix:
    action_labels: Tuple[Label, ...]
    secret_labels: Tuple[Label, ...]
    gains: np.ndarray


@dataclass(frozen=True)
class JointMatrix:
    row_labels: Tuple[Label, ...]
    col_labels: Tuple[Label, ...]
    entries: np.ndarray


def make_channel(
    rows: Sequence[Label],
    cols: Sequence[Label],
    entries,
    tolerance: Optional[float] = None,
) -> Channel:
    tol = settings.tolerance if tolerance is None else tolerance
    rows = _check_labels(rows, "rows")
    cols = _check_labels(cols, "cols")
    guard_size(len(rows), len(cols))
    arr = np.array(entries, dtype=float)
    if arr.shape != (len(rows), len(cols)):
        raise LabelMismatch(f"entries have shape {arr.shape}, labels give {(len(rows), len(cols))}")
    if not np.all(np.isfinite(arr)):
        raise NegativeEntry("entries must be finite")
    if np.any(arr < -tol):
        r, c = np.argwhere(arr < -tol)[0]
        raise NegativeEntry(f"entry ({rows[r]!r}, {cols[c]!r}) = {arr[r, c]} is negative")
    arr = np.clip(arr, 0.0, None)
    sums = arr.sum(axis=1)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size:
        i = int(bad[0])
        raise NonStochasticRow(f"row {rows[i]!r} sums to {sums[i]!r}")
    arr = arr / sums[:, None]
    return Channel(rows, cols, _freeze(arr))


def make_prior(labels: Sequence[Label], probs, tolerance: Optional[float] = None) -> Prior:
    tol = settings.tolerance if tolerance is None else tolerance
    labels = _check_labels(labels, "prior")
    arr = np.array(probs, dtype=float)
    if arr.shape != (len(labels),):
        raise LabelMismatch(f"{arr.shape[0] if arr.ndim else 0} probabilities for {len(labels)} labels")
    if np.any(arr < -tol) or np.any(arr > 1.0 + tol):
        raise BadProbability("prior probabilities must lie in [0, 1]")
    total = arr.sum()
    if abs(total - 1.0) > tol:
        raise BadProbability(f"prior sums to {total!r}")
    return Prior(labels, _freeze(np.clip(arr, 0.0, None) / total))


def uniform_prior(labels: Sequence[Label]) -> Prior:
    labels = _check_labels(labels, "prior")
    n = len(labels)
    return Prior(labels, _freeze(np.full(n, 1.0 / n)))


def point_prior(labels: Sequence[Label], secret: Label) -> Prior:
    labels = _check_labels(labels, "prior")
    probs = np.zeros(len(labels))
    probs[labels.index(secret)] = 1.0
    return Prior(labels, _freeze(probs))


def make_gain(actions: Sequence[Label], secrets: Sequence[Label], gains) -> GainMatrix:
    actions = _check_labels(actions, "actions")
    secrets = _check_labels(secrets, "secrets")
    arr = np.array(gains, dtype=float)
    if arr.shape != (len(actions), len(secrets)):
        raise LabelMismatch(f"gains have shape {arr.shape}, labels give {(len(actions), len(secrets))}")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise NegativeEntry("gains must be finite and non-negative")
    return GainMatrix(actions, secrets, _freeze(arr))


def identity_gain(labels: Sequence[Label]) -> GainMatrix:
    """The Bayes gain: guess the secret exactly, gain 1; otherwise 0."""
    labels = _check_labels(labels, "secrets")
    return GainMatrix(labels, labels, _freeze(np.eye(len(labels))))


def joint_matrix(prior: Prior, channel: Channel) -> JointMatrix:
    _same(prior.labels, channel.row_labels, "prior labels", "channel rows")
    return JointMatrix(channel.row_labels, channel.col_labels, _freeze(prior.probs[:, None] * channel.entries))


def _same(a: Sequence[Label], b: Sequence[Label], what_a: str, what_b: str) -> None:
    if tuple(a) != tuple(b):
        raise LabelMismatch(f"{what_a} do not match {what_b}")


def best_action(prior: Prior, gain: GainMatrix) -> Tuple[Label, float]:
    """Optimal action before observing anything; ties go to the first action."""
    _same(gain.secret_labels, prior.labels, "gain secrets", "prior labels")
    expected = gain.gains @ prior.probs
    i = int(np.argmax(expected))
    return gain.action_labels[i], float(expected[i])


def prior_g_vulnerability(prior: Prior, gain: GainMatrix) -> float:
    return best_action(prior, gain)[1]


def posterior_g_vulnerability(prior: Prior, channel: Channel, gain: GainMatrix) -> float:
    _same(channel.row_labels, prior.labels, "channel rows", "prior labels")
    _same(gain.secret_labels, prior.labels, "gain secrets", "prior labels")
    joint = prior.probs[:, None] * channel.entries
    # (actions x outputs): expected gain of each action given each output, unnormalized
    per_output = gain.gains @ joint
    return float(per_output.max(axis=0).sum())


def multiplicative_leakage(prior: Prior, channel: Channel, gain: GainMatrix) -> float:
    before = prior_g_vulnerability(prior, gain)
    if before <= 0.0:
        raise ZeroPriorVulnerability("prior g-vulnerability is zero; leakage undefined")
    return posterior_g_vulnerability(prior, channel, gain) / before


def prior_bayes_vulnerability(prior: Prior) -> float:
    return float(prior.probs.max())


def posterior_bayes_vulnerability(prior: Prior, channel: Channel) -> float:
    """Sum over the column maximums of the joint matrix."""
    _same(channel.row_labels, prior.labels, "channel rows", "prior labels")
    joint = prior.probs[:, None] * channel.entries
    return float(joint.max(axis=0).sum())


def bayes_leakage(prior: Prior, channel: Channel) -> float:
    return posterior_bayes_vulnerability(prior, channel) / prior_bayes_vulnerability(prior)


def bayes_capacity(channel: Channel) -> float:
    """
    Multiplicative Bayes capacity: the sum of the column maxima.

    It bounds the multiplicative g-leakage for every prior and every
    non-negative gain function, and is attained by the uniform prior.
    """
    return float(channel.entries.max(axis=0).sum())


def maxcase_capacity(channel: Channel) -> float:
    entries = channel.entries
    if np.any(entries <= 0.0):
        r, c = np.argwhere(entries <= 0.0)[0]
        raise ZeroEntry(
            f"entry ({channel.row_labels[r]!r}, {channel.col_labels[c]!r}) is zero; max-case capacity is infinite"
        )
    return float((entries.max(axis=0) / entries.min(axis=0)).max())


def epsilon_of(channel: Channel) -> float:
    return math.log(maxcase_capacity(channel))


def cascade(first: Channel, second: Channel) -> Channel:
    _same(first.col_labels, second.row_labels, "first channel outputs", "second channel inputs")
    guard_size(len(first.row_labels), len(second.col_labels), "cascade")
    return make_channel(first.row_labels, second.col_labels, first.entries @ second.entries)


def cascade_all(channels: Iterable[Channel]) -> Channel:
    channels = list(channels)
    if not channels:
        raise EmptyLabelSet("cascade of no channels")
    result = channels[0]
    for nxt in channels[1:]:
        result = cascade(result, nxt)
    return result


def _check_probability(r: float) -> float:
    r = float(r)
    if not 0.0 <= r <= 1.0 or math.isnan(r):
        raise BadProbability(f"choice probability {r} is outside [0, 1]")
    return r


def internal_choice(a: Channel, b: Channel, r: float) -> Channel:
    """
    Runs `b` with probability r and `a` otherwise, merging outputs that
    both channels share. Columns are a's outputs followed by b-only outputs.
    """
    _same(a.row_labels, b.row_labels, "first channel inputs", "second channel inputs")
    r = _check_probability(r)
    a_cols = set(a.col_labels)
    cols = list(a.col_labels) + [y for y in b.col_labels if y not in a_cols]
    index = {y: j for j, y in enumerate(cols)}
    guard_size(len(a.row_labels), len(cols), "internal choice")
    entries = np.zeros((len(a.row_labels), len(cols)))
    entries[:, : len(a.col_labels)] = (1.0 - r) * a.entries
    b_idx = [index[y] for y in b.col_labels]
    entries[:, b_idx] += r * b.entries
    return make_channel(a.row_labels, cols, entries)


def external_choice(a: Channel, b: Channel, r: float) -> Channel:
    """Like internal choice, but the adversary also learns which channel ran."""
    _same(a.row_labels, b.row_labels, "first channel inputs", "second channel inputs")
    r = _check_probability(r)
    cols = [("a", y) for y in a.col_labels] + [("b", y) for y in b.col_labels]
    guard_size(len(a.row_labels), len(cols), "external choice")
    entries = np.hstack([(1.0 - r) * a.entries, r * b.entries])
    return make_channel(a.row_labels, cols, entries)


def parallel(a: Channel, b: Channel) -> Channel:
    _same(a.row_labels, b.row_labels, "first channel inputs", "second channel inputs")
    _check_arity(a.col_labels, "first channel outputs")
    _check_arity(b.col_labels, "second channel outputs")
    n_cols = len(a.col_labels) * len(b.col_labels)
    guard_size(len(a.row_labels), n_cols, "parallel composition")
    cols = [pair_label(ya, yb) for ya in a.col_labels for yb in b.col_labels]
    entries = np.einsum("ij,ik->ijk", a.entries, b.entries).reshape(len(a.row_labels), n_cols)
    return make_channel(a.row_labels, cols, entries)


def kronecker(a: Channel, b: Channel) -> Channel:
    for labels, what in (
        (a.row_labels, "first channel inputs"),
        (a.col_labels, "first channel outputs"),
        (b.row_labels, "second channel inputs"),
        (b.col_labels, "second channel outputs"),
    ):
        _check_arity(labels, what)
    n_rows = len(a.row_labels) * len(b.row_labels)
    n_cols = len(a.col_labels) * len(b.col_labels)
    guard_size(n_rows, n_cols, "Kronecker product")
    rows = [pair_label(xa, xb) for xa in a.row_labels for xb in b.row_labels]
    cols = [pair_label(ya, yb) for ya in a.col_labels for yb in b.col_labels]
    return make_channel(rows, cols, np.kron(a.entries, b.entries))


def unit_channel() -> Channel:
    return Channel((UNIT,), (UNIT,), _freeze([[1.0]]))


def kronecker_power(a: Channel, n: int) -> Channel:
    if n < 0:
        raise ValueError("Kronecker power must be non-negative")
    result = unit_channel()
    for _ in range(n):
        result = kronecker(result, a)
    return result


def dalenius_leakage(
    correlation_prior: Prior,
    correlation_channel: Channel,
    system: Channel,
    gain: GainMatrix,
) -> float:
    """
    Leakage about a correlated secret Z when only X goes through `system`.

    The correlation is given as a marginal on Z and a channel Z -> X; the
    result never exceeds bayes_capacity(system).
    """
    _same(correlation_channel.row_labels, correlation_prior.labels, "correlation rows", "Z prior labels")
    _same(correlation_channel.col_labels, system.row_labels, "correlation outputs", "system inputs")
    return multiplicative_leakage(correlation_prior, cascade(correlation_channel, system), gain)


@dataclass(frozen=True)
class LeakageSummary:
    prior_vulnerability: float
    posterior_vulnerability: float
    leakage: float
    capacity: float
    epsilon: Optional[float]
    maxcase_capacity: Optional[float]


def channel_leakage_summary(prior: Prior, channel: Channel, gain: Optional[GainMatrix] = None) -> LeakageSummary:
    gain = gain if gain is not None else identity_gain(prior.labels)
    before = prior_g_vulnerability(prior, gain)
    after = posterior_g_vulnerability(prior, channel, gain)
    try:
        maxcase: Optional[float] = maxcase_capacity(channel)
        eps: Optional[float] = math.log(maxcase)
    except ZeroEntry:
        maxcase, eps = None, None
    return LeakageSummary(
        prior_vulnerability=before,
        posterior_vulnerability=after,
        leakage=after / before if before > 0 else math.nan,
        capacity=bayes_capacity(channel),
        epsilon=eps,
        maxcase_capacity=maxcase,
    )
