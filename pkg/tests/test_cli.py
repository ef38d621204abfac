import csv
import io
import json
import math

import numpy as np
import pytest

from pmean.adversaries import random_dirichlet
from pmean.cli import main
from pmean.model import save_instance


@pytest.fixture
def inst8(tmp_path):
    path = tmp_path / "inst8.json"
    save_instance(random_dirichlet(8, 24, 11), path)
    return str(path)


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_run_table_threshold_nsw(capsys, inst8):
    code, out, _ = _run(capsys, "run", "--instance", inst8, "--p", "0", "--threshold", "table")
    assert code == 0
    rep = json.loads(out)
    assert rep["config"]["phi"] == 512.0
    assert rep["config"]["split"] == "minimal"
    assert rep["ratio"] == pytest.approx(rep["oracle_welfare"] / rep["online_welfare"])


def test_nsw_alias_byte_identical(capsys, inst8):
    _, a, _ = _run(capsys, "run", "--instance", inst8, "--p", "nsw")
    _, b, _ = _run(capsys, "run", "--instance", inst8, "--p", "0")
    assert a == b


def test_universal_threshold(capsys, inst8):
    for p in ("-inf", "-2", "0.5"):
        code, out, _ = _run(capsys, "run", "--instance", inst8, "--p", p, "--threshold", "universal", "--no-oracle")
        assert code == 0
        assert json.loads(out)["config"]["phi"] == pytest.approx(8 * math.sqrt(8) * 4)


def test_manual_threshold_and_diagnostics(capsys, inst8):
    code, out, _ = _run(capsys, "run", "--instance", inst8, "--threshold", "manual", "--phi", "2", "--diagnostics", "full")
    assert code == 0
    rep = json.loads(out)
    checks = {d["check"] for d in rep["diagnostics"]}
    assert {"vulnerable_high", "low_valued", "suboptimal", "exit_threshold"} <= checks
    assert "allocation" in rep


def test_manual_without_phi_is_config_error(capsys, inst8):
    code, _, err = _run(capsys, "run", "--instance", inst8, "--threshold", "manual")
    assert code == 2 and "phi" in err


def test_scaling_violation_exit_3(capsys, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"n": 2, "goods": [[0.6, 0.5], [0.5, 0.5]], "meta": ""}))
    code, _, err = _run(capsys, "run", "--instance", str(path))
    assert code == 3 and "agent 0" in err


def test_unreadable_and_malformed_exit_2(capsys, tmp_path):
    code, _, _ = _run(capsys, "run", "--instance", str(tmp_path / "missing.json"))
    assert code == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert _run(capsys, "run", "--instance", str(bad))[0] == 2
    neg = tmp_path / "neg.csv"
    neg.write_text("agent_1,agent_2\n-0.5,0.5\n1.5,0.5\n")
    assert _run(capsys, "run", "--instance", str(neg))[0] == 2
    assert _run(capsys, "run", "--p", "2")[0] == 2


def test_csv_run(capsys, inst8):
    code, out, _ = _run(capsys, "run", "--instance", inst8, "--format", "csv", "--no-oracle")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 1 and rows[0]["phi"] == "512.0"


def test_out_file(capsys, tmp_path, inst8):
    target = tmp_path / "report.json"
    code, out, _ = _run(capsys, "run", "--instance", inst8, "--no-oracle", "--out", str(target))
    assert code == 0 and out == ""
    assert json.loads(target.read_text())["config"]["n"] == 8


def test_generator_source_recorded(capsys):
    code, out, _ = _run(capsys, "run", "--generator", "random_sparse", "--n", "4", "--t", "10", "--seed", "3", "--no-oracle")
    cfg = json.loads(out)["config"]
    assert code == 0 and cfg["seed"] == 3 and cfg["source"]["generator"] == "random_sparse"


def test_bench_empty_grid(capsys):
    code, out, _ = _run(capsys, "bench", "--p", "")
    assert code == 0 and json.loads(out)["rows"] == []


@pytest.mark.slow
def test_bench_default_grid_n16(capsys):
    code, out, _ = _run(capsys, "bench", "--generator", "random_dirichlet", "--n", "16", "--budget", "500", "--format", "csv")
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0
    assert len(rows) == 8 and all(r["passed"] == "True" for r in rows)
    assert [r["p"] for r in rows][0] == "-inf"


def test_bench_four_agent_ratio_above_one(capsys):
    code, out, _ = _run(capsys, "bench", "--generator", "suboptimality_4agent", "--n", "4", "--p", "-inf,-1,0,0.5", "--budget", "200")
    rows = json.loads(out)["rows"]
    assert code == 0 and len(rows) == 4
    assert all(r["ratio"] > 1 for r in rows)


def test_adversary_export(capsys, tmp_path):
    path = tmp_path / "adv.csv"
    code, out, _ = _run(capsys, "adversary", "--generator", "negative_p_groups", "--n", "27", "--p", "-1",
                        "--algorithm", "uniform", "--no-oracle", "--export", str(path))
    rep = json.loads(out)
    assert code == 0 and rep["scaling_ok"] and rep["config"]["params"]["group_size"] == 9
    assert rep["oracle_welfare"] >= 0.25
    assert path.read_text().startswith("agent_1,")


def test_oracle_grid(capsys, tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps({"n": 2, "goods": [[0.5, 0.5], [0.5, 0.5]], "meta": "tiny"}))
    code, out, _ = _run(capsys, "oracle", "--instance", str(path), "--method", "grid", "--step", "0.25")
    rep = json.loads(out)
    assert code == 0 and rep["method"] == "grid_bruteforce" and rep["welfare"] == pytest.approx(0.5)
    code, _, err = _run(capsys, "oracle", "--generator", "random_dirichlet", "--n", "5", "--method", "grid")
    assert code == 2 and "grid" in err


def test_validate_default(capsys):
    code, out, _ = _run(capsys, "validate")
    results = json.loads(out)["results"]
    assert code == 0 and all(r["passed"] for r in results)


def test_validate_corrupted_instance_exit_3(capsys, tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"n": 2, "goods": [[0.6, 0.5], [0.5, 0.5]]}))
    assert _run(capsys, "validate", "--instance", str(path))[0] == 3


def test_validate_phi_above_quarter_n(capsys):
    code, out, _ = _run(capsys, "validate", "--n", "8", "--seed", "1", "--phi", "4")
    lemma = [r for r in json.loads(out)["results"] if r["invariant"] == "lemma_bounds"][0]
    assert code == 0 and lemma["status"] == "hypothesis not met"


def test_log_env(capsys, monkeypatch, inst8):
    monkeypatch.setenv("PMEAN_LOG", "debug")
    assert _run(capsys, "run", "--instance", inst8, "--no-oracle")[0] == 0
