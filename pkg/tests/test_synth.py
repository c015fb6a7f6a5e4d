import io

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from services.pipeline import TreatmentConfig, load_classification, load_taxonomy, run_pipeline
from services.qif import bayes_capacity, cascade_all
from services.suffixes import PublicSuffixList
from services.synth import (
    CLASSIFICATION_FILE,
    HISTORY_FILE,
    SUFFIX_FILE,
    TAXONOMY_FILE,
    synth_generate,
    worked_example,
    zipf_weights,
)
from services.topics_model import (
    generalization_channel,
    identity_channel,
    topics_capacity_bound,
    topics_privacy_channel,
)
from utils.errors import BadParams


def run_synth_pipeline(dataset, s=2, r=0.05):
    classification = load_classification(dataset.classification_csv, load_taxonomy(dataset.taxonomy))
    psl = PublicSuffixList.from_lines(dataset.suffix_list.splitlines())
    return run_pipeline(dataset.history_csv, classification, psl, TreatmentConfig(s=s), r=r)


def test_same_seed_same_bytes():
    a = synth_generate(seed=42, n_users=20, n_domains=30, taxonomy_size=10)
    b = synth_generate(seed=42, n_users=20, n_domains=30, taxonomy_size=10)
    c = synth_generate(seed=43, n_users=20, n_domains=30, taxonomy_size=10)
    assert a == b
    assert a.history_csv != c.history_csv


def test_every_domain_has_one_to_three_topics():
    dataset = synth_generate(seed=1, n_users=5, n_domains=50, taxonomy_size=8)
    frame = pd.read_csv(io.StringIO(dataset.classification_csv))
    sizes = frame["topics"].str.split(";").map(len)
    assert len(frame) == 50
    assert sizes.between(1, 3).all()


def test_uniform_popularity_with_zero_exponent():
    dataset = synth_generate(
        seed=7, n_users=2500, n_domains=50, taxonomy_size=5, visits_per_user=(40, 40), zipf_exponent=0.0
    )
    frame = pd.read_csv(io.StringIO(dataset.history_csv))
    counts = frame["url_or_domain"].value_counts().to_numpy()
    assert counts.sum() == 100_000
    assert len(counts) == 50
    assert stats.chisquare(counts).pvalue > 1e-4


def test_zipf_weights():
    w = zipf_weights(4, 1.0)
    assert w.sum() == pytest.approx(1.0)
    assert np.all(np.diff(w) < 0)
    np.testing.assert_allclose(zipf_weights(3, 0.0), 1 / 3)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"n_users": 0},
        {"taxonomy_size": 0},
        {"visits_per_user": (5, 2)},
        {"topics_per_domain": (0, 2)},
        {"zipf_exponent": -1.0},
    ],
)
def test_bad_params(kwargs):
    base = {"seed": 0, "n_users": 3, "n_domains": 3, "taxonomy_size": 3}
    with pytest.raises(BadParams):
        synth_generate(**{**base, **kwargs})


def test_write_dataset(tmp_path):
    written = worked_example().write(tmp_path / "data")
    assert set(written) == {HISTORY_FILE, CLASSIFICATION_FILE, SUFFIX_FILE, TAXONOMY_FILE}
    assert (tmp_path / "data" / SUFFIX_FILE).read_text(encoding="utf-8") == "tld\n"
    assert (tmp_path / "data" / TAXONOMY_FILE).read_text(encoding="utf-8").split() == [
        "Music", "News", "Sports", "Travel", "Ads",
    ]


def test_synthetic_world_structure():
    dataset = synth_generate(seed=3, n_users=100, n_domains=80, taxonomy_size=12)
    result = run_synth_pipeline(dataset, s=3, r=0.1)
    assignment, params = result.inputs.assignment, result.inputs.params

    union = set()
    for profile in result.profiles:
        union.update(profile.top_s)
    assert params.m_prime == len(union)

    c_t = topics_privacy_channel(assignment, params)
    assert bayes_capacity(c_t) == pytest.approx(0.1 + params.m_prime * 0.9 / 3, abs=1e-9)

    generalized = cascade_all([identity_channel(assignment.histories), generalization_channel(assignment)])
    assert bayes_capacity(generalized) == len({tuple(sorted(p.top_s)) for p in result.profiles})


def test_capacity_reaches_bound_when_every_topic_occurs():
    dataset = synth_generate(seed=11, n_users=60, n_domains=40, taxonomy_size=4)
    result = run_synth_pipeline(dataset, s=2, r=0.05)
    params = result.inputs.params
    assert params.m_prime == params.m
    c_t = topics_privacy_channel(result.inputs.assignment, params)
    assert bayes_capacity(c_t) == pytest.approx(topics_capacity_bound(params), abs=1e-9)
