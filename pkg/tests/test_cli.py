import io
import json

import pandas as pd
import pytest
from click.testing import CliRunner

from cli import cli
from utils.errors import InvariantViolation


@pytest.fixture
def runner():
    return CliRunner()


def read_csv(text):
    return pd.read_csv(io.StringIO(text))


def error_of(result):
    return json.loads(result.stderr.strip().splitlines()[-1])


def test_theory_default_grid(runner):
    result = runner.invoke(cli, ["theory"])
    assert result.exit_code == 0, result.output
    frame = read_csv(result.stdout)
    assert list(frame.columns) == ["m", "r", "s", "avg_capacity", "epsilon", "max_capacity"]
    assert frame["m"].tolist() == [349, 629, 1091, 1679]
    assert frame["avg_capacity"].tolist() == pytest.approx([66.36, 119.56, 207.34, 319.06])


def test_theory_rebalance_grid(runner):
    result = runner.invoke(cli, ["theory", "--grid", "table6", "--format", "json"])
    assert result.exit_code == 0, result.output
    rows = json.loads(result.stdout)
    assert len(rows) == 7
    assert [row["s"] for row in rows[2:]] == [5, 6, 7, 8, 9]


def test_theory_single_row_rounds_epsilon(runner):
    result = runner.invoke(cli, ["theory", "--m", "4", "--s", "2", "--r", "0.05"])
    assert result.exit_code == 0, result.output
    row = read_csv(result.stdout).iloc[0]
    assert row["epsilon"] == pytest.approx(3.664)
    assert row["avg_capacity"] == pytest.approx(1.95)
    assert row["max_capacity"] == pytest.approx(39.0)


def test_theory_compare_to_v1(runner):
    result = runner.invoke(cli, ["theory", "--m", "v2", "--compare-to", "v1", "--match-s", "--format", "json"])
    assert result.exit_code == 0, result.output
    row = json.loads(result.stdout)[0]
    assert row["increase_percent"] == pytest.approx(80.17, abs=0.01)
    assert row["matching_s"] == 9


def test_theory_compare_to_table_shows_percent(runner):
    result = runner.invoke(cli, ["theory", "--m", "v2", "--compare-to", "v1", "--format", "table"])
    assert result.exit_code == 0, result.output
    assert "+80.17%" in result.stdout


def test_theory_invalid_params(runner):
    result = runner.invoke(cli, ["theory", "--m", "3", "--s", "5"])
    assert result.exit_code == 2
    assert result.stdout == ""
    assert error_of(result)["error"] == "invalid_parameters"


def test_theory_unknown_taxonomy(runner):
    result = runner.invoke(cli, ["theory", "--m", "not-a-taxonomy"])
    assert result.exit_code == 2
    assert error_of(result)["error"] == "usage"


def test_counting_curve(runner):
    result = runner.invoke(cli, ["counting-curve", "--n-min", "10", "--n-max", "10", "--m", "349", "--format", "json"])
    assert result.exit_code == 0, result.output
    rows = json.loads(result.stdout)
    assert len(rows) == 1
    assert rows[0]["probability"] == pytest.approx(0.0056, abs=3e-4)


def test_counting_curve_bad_range(runner):
    result = runner.invoke(cli, ["counting-curve", "--n-min", "5", "--n-max", "2"])
    assert result.exit_code == 2
    assert error_of(result)["error"] == "bad_params"


def test_gen_synth_is_deterministic(runner, tmp_path):
    args = ["gen-synth", "--n-users", "15", "--n-domains", "20", "--taxonomy-size", "6", "--seed", "9"]
    for name in ("a", "b"):
        result = runner.invoke(cli, args + ["--out", str(tmp_path / name)])
        assert result.exit_code == 0, result.output
        assert len(result.stdout.splitlines()) == 4
    for path in (tmp_path / "a").iterdir():
        assert path.read_bytes() == (tmp_path / "b" / path.name).read_bytes()


def write_worked_example(runner, tmp_path):
    out = tmp_path / "worked"
    result = runner.invoke(cli, ["gen-synth", "--worked-example", "--out", str(out)])
    assert result.exit_code == 0, result.output
    return [
        "analyze",
        "--history", str(out / "history.csv"),
        "--classification", str(out / "classification.csv"),
        "--suffixes", str(out / "suffixes.dat"),
        "--taxonomy", str(out / "taxonomy.txt"),
        "--s", "2",
    ]


def test_analyze_worked_example(runner, tmp_path):
    args = write_worked_example(runner, tmp_path)
    result = runner.invoke(cli, args + ["--dump-profiles", str(tmp_path / "profiles.jsonl")])
    assert result.exit_code == 0, result.output
    report = json.loads(result.stdout)
    capacities = {row["stage"]: row["capacity"] for row in report["privacy"]}
    assert capacities == pytest.approx({"cookies": 3.0, "generalization": 2.0, "bounded_noise": 2.0, "topics": 1.95})
    assert report["summary"]["k"] == 1
    assert report["summary"]["contexts"] == 5
    assert len((tmp_path / "profiles.jsonl").read_text(encoding="utf-8").splitlines()) == 3


def test_analyze_csv_output(runner, tmp_path):
    args = write_worked_example(runner, tmp_path)
    result = runner.invoke(cli, args + ["--format", "csv"])
    assert result.exit_code == 0, result.output
    assert result.stdout.startswith("stage,leakage,capacity")


def test_analyze_missing_file(runner, tmp_path):
    args = write_worked_example(runner, tmp_path)
    args[2] = str(tmp_path / "missing.csv")
    result = runner.invoke(cli, args)
    assert result.exit_code == 2
    assert "history file not found" in error_of(result)["message"]


def test_analyze_without_eligible_users(runner, tmp_path):
    args = write_worked_example(runner, tmp_path)
    history = tmp_path / "singletons.csv"
    history.write_text(
        "user_id,timestamp,url_or_domain\n"
        "u1,2006-03-01T10:00:00,music.tld\n"
        "u2,2006-03-01T11:00:00,news.tld\n",
        encoding="utf-8",
    )
    args[2] = str(history)
    result = runner.invoke(cli, args)
    assert result.exit_code == 2
    error = error_of(result)
    assert error["error"] == "no_eligible_users"
    assert "no eligible users" in error["message"]


def test_simulate_report_topic(runner):
    result = runner.invoke(cli, ["simulate", "--trials", "20000", "--format", "json", "--seed", "3"])
    assert result.exit_code == 0, result.output
    rows = json.loads(result.stdout)
    assert len(rows) == 5
    assert sum(row["frequency"] for row in rows) == pytest.approx(1.0)
    assert all(abs(row["z"]) < 6 for row in rows)


def test_simulate_counting(runner):
    result = runner.invoke(
        cli, ["simulate", "--experiment", "counting", "--n-users", "3", "--trials", "20000", "--partitions", "2"]
    )
    assert result.exit_code == 0, result.output
    report = json.loads(result.stdout)
    assert abs(report["estimate"] - report["exact"]) <= 5 * report["stderr"]


def test_simulate_cookies(runner):
    result = runner.invoke(cli, ["simulate", "--experiment", "cookies", "--n-users", "3", "--contexts", "5"])
    assert result.exit_code == 0, result.output
    frame = read_csv(result.stdout)
    assert list(frame.columns) == ["uid", "origin", "context", "timestamp"]
    assert len(frame) == 15
    assert frame["uid"].nunique() == 3


def test_invariant_violation_exits_3(runner, monkeypatch):
    def broken(_params):
        raise InvariantViolation("rows lost between stages")
    monkeypatch.setattr("handlers.theory.theory_table", broken)
    result = runner.invoke(cli, ["theory"])
    assert result.exit_code == 3
    assert error_of(result) == {"error": "invariant_violation", "message": "rows lost between stages"}
