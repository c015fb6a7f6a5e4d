import numpy as np
import pytest

from services.pipeline import TreatmentConfig, load_classification, load_taxonomy, run_pipeline
from services.qif import make_channel, make_prior
from services.suffixes import PublicSuffixList
from services.synth import WORKED_EXAMPLE_TAXONOMY, worked_example
from services.topics_model import TopicAssignment, TopicsParams

MUSIC_NEWS = ("Music", "News")
SPORTS_TRAVEL = ("Sports", "Travel")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def taxonomy():
    return WORKED_EXAMPLE_TAXONOMY


@pytest.fixture
def assignment():
    """Three users over five topics; Alice and Carol share a top-2 set."""
    return TopicAssignment(
        topsets={"Alice": MUSIC_NEWS, "Bob": SPORTS_TRAVEL, "Carol": MUSIC_NEWS},
        taxonomy=WORKED_EXAMPLE_TAXONOMY,
    )


@pytest.fixture
def params():
    return TopicsParams(m=5, s=2, r=0.05, m_prime=4)


@pytest.fixture
def worked_dataset():
    return worked_example()


@pytest.fixture
def worked_pipeline(worked_dataset):
    classification = load_classification(
        worked_dataset.classification_csv, load_taxonomy(worked_dataset.taxonomy)
    )
    psl = PublicSuffixList.from_lines(worked_dataset.suffix_list.splitlines())
    return run_pipeline(worked_dataset.history_csv, classification, psl, TreatmentConfig(s=2), r=0.05)


@pytest.fixture
def random_channel():
    def build(rng, n_rows, n_cols, zeros=0.0, prefix="y"):
        entries = rng.random((n_rows, n_cols)) + 1e-3
        if zeros:
            mask = rng.random((n_rows, n_cols)) >= zeros
            mask[np.arange(n_rows), rng.integers(0, n_cols, n_rows)] = True
            entries = entries * mask
        entries = entries / entries.sum(axis=1, keepdims=True)
        rows = [f"x{i}" for i in range(n_rows)]
        cols = [f"{prefix}{j}" for j in range(n_cols)]
        return make_channel(rows, cols, entries)
    return build


@pytest.fixture
def random_prior():
    def build(rng, labels):
        return make_prior(labels, rng.dirichlet(np.ones(len(labels))))
    return build
