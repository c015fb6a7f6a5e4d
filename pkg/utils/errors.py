# utils/errors.py
from typing import Any, Dict


class ScopeError(Exception):
    """Base class for every error raised by TopicScope services."""

    code = "scope_error"

    def to_dict(self) -> Dict[str, Any]:
        return {"error": self.code, "message": str(self)}


class ChannelError(ScopeError):
    code = "channel_error"


class NonStochasticRow(ChannelError):
    code = "non_stochastic_row"


class NegativeEntry(ChannelError):
    code = "negative_entry"


class DuplicateLabel(ChannelError):
    code = "duplicate_label"


class EmptyLabelSet(ChannelError):
    code = "empty_label_set"


class LabelMismatch(ChannelError):
    code = "label_mismatch"


class ZeroPriorVulnerability(ChannelError):
    code = "zero_prior_vulnerability"


class ZeroEntry(ChannelError):
    code = "zero_entry"


class BadProbability(ChannelError):
    code = "bad_probability"


class ChannelTooLarge(ChannelError):
    code = "memory_cap"


class ModelError(ScopeError):
    code = "model_error"


class NotDeterministic(ModelError):
    code = "not_deterministic"


class IncompleteAssignment(ModelError):
    code = "incomplete_assignment"


class TopicNotInTaxonomy(ModelError):
    code = "topic_not_in_taxonomy"


class ParamMismatch(ModelError):
    code = "param_mismatch"


class BadWorld(ModelError):
    code = "bad_world"


class MissingMPrime(ModelError):
    code = "missing_m_prime"


class ZeroR(ModelError):
    code = "zero_r"


class EmptyTopSet(ModelError):
    code = "empty_top_set"


class DataError(ScopeError):
    code = "data_error"


class Unparseable(DataError):
    code = "unparseable"


class MalformedCsv(DataError):
    code = "malformed_csv"


class BadSuffixList(DataError):
    code = "bad_suffix_list"


class EmptyClassification(DataError):
    code = "empty_classification"


class InsufficientTopics(DataError):
    code = "insufficient_topics"


class BadParams(DataError):
    code = "bad_params"


class NoEligibleUsers(DataError):
    code = "no_eligible_users"


class InvariantViolation(ScopeError):
    """An internal post-condition failed; maps to exit code 3."""

    code = "invariant_violation"
