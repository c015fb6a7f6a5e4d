"""Published numbers the library must keep reproducing."""
import json
from pathlib import Path

import pandas as pd
import pytest

from services.analysis import analyze
from services.qif import bayes_capacity, make_prior, posterior_g_vulnerability, prior_g_vulnerability
from services.topics_model import (
    CookieWorld,
    TopicsParams,
    bounded_noise_leakage,
    cookies_leakage,
    cookies_posterior_vulnerability,
    counting_exact_probability,
    counting_params,
    generalization_bound,
    grid_params,
    iba_gain,
    theory_table,
    topics_epsilon,
    topics_leakage,
    topics_maxcase_capacity,
    topics_privacy_channel,
    topics_report_channel,
)

GOLDEN = Path(__file__).parent / "golden"
CAPACITY_TOLERANCE = 5e-3
EPSILON_TOLERANCE = 5e-4


def load_json(name):
    return json.loads((GOLDEN / name).read_text(encoding="utf-8"))


@pytest.mark.parametrize("grid", ["table5", "table6", "aol"])
def test_theory_grid(grid):
    expected = pd.read_csv(GOLDEN / f"{grid}.csv")
    rows = theory_table(grid_params(grid))
    assert len(rows) == len(expected)
    for row, (_, want) in zip(rows, expected.iterrows()):
        assert (row.m, row.s) == (int(want["m"]), int(want["s"]))
        assert row.r == pytest.approx(want["r"])
        assert row.avg_capacity == pytest.approx(want["avg_capacity"], abs=CAPACITY_TOLERANCE)
        assert row.epsilon == pytest.approx(want["epsilon"], abs=EPSILON_TOLERANCE)
        assert row.max_capacity == pytest.approx(want["max_capacity"], abs=CAPACITY_TOLERANCE)


@pytest.mark.parametrize("m", [349, 629])
def test_counting_checkpoints(m):
    cp = counting_params(TopicsParams(m=m, s=5, r=0.05))
    for _, row in pd.read_csv(GOLDEN / "counting_checkpoints.csv").iterrows():
        assert row["low"] <= counting_exact_probability(int(row["N"]), cp) <= row["high"]


def test_worked_example_formulas():
    golden = load_json("worked_example.json")

    cookies = golden["cookies"]
    world = CookieWorld(n_users=cookies["n_users"], n_contexts=cookies["n_contexts"])
    assert cookies_posterior_vulnerability(world) == pytest.approx(cookies["posterior_vulnerability"], abs=1e-3)
    assert cookies_leakage(world)[0] == cookies["leakage"]

    g = golden["generalization"]
    assert generalization_bound(TopicsParams(m=g["m"], s=g["s"], r=0.05)) == g["bound"]

    bn = golden["bounded_noise"]
    leakage, bound = bounded_noise_leakage(TopicsParams(m=bn["m"], s=bn["s"], r=0.05, m_prime=bn["m_prime"]))
    assert (leakage, bound) == pytest.approx((bn["leakage"], bn["bound"]), abs=1e-3)

    t = golden["topics"]
    leakage, bound = topics_leakage(TopicsParams(m=t["m"], s=t["s"], r=t["r"], m_prime=t["m_prime"]))
    assert leakage == pytest.approx(t["leakage"], abs=1e-3)
    assert bound == pytest.approx(t["bound"], abs=CAPACITY_TOLERANCE)

    e = golden["epsilon"]
    params = TopicsParams(m=e["m"], s=e["s"], r=e["r"])
    assert topics_epsilon(params) == pytest.approx(e["epsilon"], abs=1e-3)
    assert topics_maxcase_capacity(params) == pytest.approx(e["max_capacity"], abs=1e-3)


def test_worked_example_iba(taxonomy, params):
    topsets = [("Music", "News"), ("Sports", "Travel")]
    gain = iba_gain(topsets, taxonomy)
    channel = topics_report_channel(topsets, params, taxonomy)
    for case in load_json("worked_example.json")["iba"]:
        prior = make_prior(channel.row_labels, case["prior"])
        assert prior_g_vulnerability(prior, gain) == pytest.approx(case["prior_vulnerability"], abs=1e-3)
        assert posterior_g_vulnerability(prior, channel, gain) == pytest.approx(case["posterior_vulnerability"], abs=1e-3)


def test_worked_example_pipeline(worked_pipeline):
    golden = load_json("worked_example.json")["pipeline"]
    inputs = worked_pipeline.inputs
    assert {u: list(sigma) for u, sigma in inputs.assignment.topsets.items()} == golden["topsets"]
    c_t = topics_privacy_channel(inputs.assignment, inputs.params)
    assert c_t.row("Alice").tolist() == pytest.approx(golden["alice_row"], abs=1e-9)
    assert bayes_capacity(c_t) == pytest.approx(golden["capacities"]["topics"], abs=1e-9)


def test_worked_example_report(worked_pipeline):
    golden = load_json("worked_example.json")["pipeline"]
    n_contexts = len({r.domain for p in worked_pipeline.profiles for r in p.history})
    assert n_contexts == golden["contexts"]
    report = analyze(worked_pipeline.inputs, n_contexts)
    assert report.summary["k"] == golden["k"]
    cookies = report.privacy[0]
    assert cookies.formula == golden["cookie_formula"]
    assert {row.stage: row.capacity for row in report.privacy} == pytest.approx(golden["capacities"], abs=1e-9)
