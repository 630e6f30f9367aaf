import json

import pytest

from helpers import toy_alternatives
from prefelicit.cli import main
from prefelicit.engine import AlternativeSet, LookupTable


@pytest.fixture()
def small_policy_args(tmp_path):
    arrivals = tmp_path / "arrivals.csv"
    arrivals.write_text(
        "date,count\n" + "\n".join(f"2020-04-{d:02d},6" for d in range(1, 6)) + "\n"
    )
    ages = tmp_path / "ages.csv"
    ages.write_text(
        "bin,proportion,survival_rate\n"
        "18-29,0.05,0.85\n30-39,0.09,0.80\n40-49,0.16,0.72\n"
        "50-59,0.25,0.60\n60-69,0.27,0.45\n70+,0.18,0.30\n"
    )
    return arrivals, ages


def test_policies_generate_writes_alternatives(tmp_path, small_policy_args, capsys):
    arrivals, ages = small_policy_args
    out = tmp_path / "alternatives.json"
    code = main(
        [
            "policies", "generate",
            "--count", "4", "--seed", "7", "--out", str(out),
            "--arrivals", str(arrivals), "--ages", str(ages), "--json",
        ]
    )
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["count"] == 4 and payload["dimension"] == 16
    alternatives = AlternativeSet.load(out)
    assert len(alternatives) == 4
    assert alternatives.display_mask.count(False) == 2
    assert alternatives.raw_outcomes is not None


def test_policies_generate_default_count_is_25(tmp_path, capsys):
    out = tmp_path / "alternatives.json"
    code = main(["policies", "generate", "--seed", "1", "--out", str(out), "--json"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["count"] == 25 and payload["dimension"] == 16


def test_lookup_build_counts(tmp_path, capsys):
    alt_path = tmp_path / "alt.json"
    toy_alternatives().save(alt_path)
    out = tmp_path / "table.json"
    code = main(
        [
            "lookup", "build",
            "--alternatives", str(alt_path),
            "--k", "3", "--out", str(out), "--json",
        ]
    )
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["entries"] == 13  # 1 + 3 + 9
    table = LookupTable.load(out)
    assert len(table.entries) == 13


def test_experiment_run_writes_reports(tmp_path, capsys):
    out_json = tmp_path / "report.json"
    out_csv = tmp_path / "report.csv"
    code = main(
        [
            "experiment", "run",
            "--agents", "3", "--k", "2",
            "--num-alternatives", "4", "--num-features", "3",
            "--seed", "9",
            "--out-json", str(out_json), "--out-csv", str(out_csv), "--json",
        ]
    )
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["n"] == 3
    report = json.loads(out_json.read_text())
    assert report["n"] == 3
    lines = out_csv.read_text().strip().splitlines()
    assert lines[0].startswith("seed,z_robust,z_rand")
    assert len(lines) == 4


def test_analyze_reference_fixture(capsys):
    from importlib import resources

    with resources.as_file(
        resources.files("prefelicit.data") / "demo_sessions.jsonl"
    ) as path:
        code = main(["analyze", "--sessions", str(path), "--json"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["counts"] == {
        "prefers_robust": 94,
        "prefers_random": 61,
        "indifferent_different": 22,
        "indifferent_same": 16,
    }
    assert payload["chi_square"] == pytest.approx(6.61, abs=0.01)
    assert payload["margin"] == pytest.approx(33 / 155, abs=1e-9)
    assert payload["t"] == pytest.approx(4.58, abs=1e-6)


def test_analyze_missing_file_exits_3(capsys):
    assert main(["analyze", "--sessions", "/nonexistent.jsonl"]) == 3


def test_selftest_passes(capsys):
    code = main(["selftest", "--lp-instances", "10", "--query-instances", "3", "--json"])
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    assert all(r["passed"] for r in payload["results"])


def test_serve_check_validates_config(tmp_path, capsys):
    alt_path = tmp_path / "alt.json"
    toy_alternatives().save(alt_path)
    config = tmp_path / "config.json"
    config.write_text(
        json.dumps(
            {
                "v": 1,
                "alternatives_path": str(alt_path),
                "k_queries": 2,
                "log_path": str(tmp_path / "events.jsonl"),
                "bind": "127.0.0.1:8400",
            }
        )
    )
    assert main(["serve", "--config", str(config), "--check", "--json"]) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["ok"] is True


def test_usage_error_exits_2():
    with pytest.raises(SystemExit) as excinfo:
        main(["lookup", "build"])  # missing required flags
    assert excinfo.value.code == 2


def test_entropy_seed_is_printed(tmp_path, capsys):
    out_json = tmp_path / "r.json"
    out_csv = tmp_path / "r.csv"
    code = main(
        [
            "experiment", "run",
            "--agents", "1", "--k", "1",
            "--num-alternatives", "3", "--num-features", "2",
            "--out-json", str(out_json), "--out-csv", str(out_csv),
        ]
    )
    assert code == 0
    captured = capsys.readouterr()
    assert "seed:" in captured.err
