import json
import subprocess
import sys

import numpy as np
import pytest

from pncriterion.cli import SCHEMA_VERSION, dumps, main


def _run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out), out


@pytest.fixture
def abalone_config(tmp_path, data_dir, abalone_raw_path):
    cfg = {
        "data": {"path": abalone_raw_path,
                 "schema": json.loads((data_dir / "abalone_schema.json").read_text())},
        "model": {"kind": "multinomial", "column": "cell"},
        "alpha": 0.05,
    }
    path = tmp_path / "abalone.json"
    path.write_text(json.dumps(cfg))
    return path


def test_multinomial_abalone(abalone_counts_path, capsys):
    code, rep, _ = _run(["multinomial", "--counts", abalone_counts_path, "--alpha", "0.05"], capsys)
    assert code == 0 and rep["exit_code"] == 0
    res = rep["result"]
    assert res["total"] == pytest.approx(0.0076, abs=5e-5)
    assert res["decision"] == "Pass"
    assert res["cells"] == 63 and res["p"] == 62 and res["n"] == 4177
    assert res["required_n"] == 1642


def test_criterion_abalone(abalone_config, capsys):
    code, rep, _ = _run(["criterion", "--config", str(abalone_config)], capsys)
    assert code == 0
    res = rep["result"]
    assert res["p"] == 62 and res["n"] == 4177
    assert res["first_order"] == pytest.approx(62 / 8354)
    assert res["decision"] == "Pass"
    assert res["model"]["cells"] == 63


@pytest.mark.parametrize("alpha,n", [("0.05", 1642), ("0.01", 38847)])
def test_sample_size(alpha, n, capsys):
    code, rep, _ = _run(["sample-size", "--p", "62", "--m-hat", "36128.33", "--alpha", alpha], capsys)
    assert code == 0 and rep["result"]["required_n"] == n


def test_threshold(capsys):
    code, rep, _ = _run(["threshold", "--alpha", "0.05"], capsys)
    assert rep["result"]["C"] == 0.02 and rep["result"]["mode"] == "Approximate"
    code, rep, _ = _run(["threshold", "--alpha", "0.05", "--exact"], capsys)
    assert rep["result"]["min_t"] == pytest.approx(0.45, abs=1e-6)


def test_config_error_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, rep, _ = _run(["criterion", "--config", str(bad)], capsys)
    assert code == 2 and rep["error"]["family"] == "config" and rep["exit_code"] == 2
    code, rep, _ = _run(["threshold", "--alpha", "0.7"], capsys)
    assert code == 2


def test_data_error_exit_3(tmp_path, abalone_config, capsys):
    corrupt = tmp_path / "corrupt.csv"
    corrupt.write_text("sex,rings\nF,7\nX,7\n")
    code, rep, _ = _run(["criterion", "--config", str(abalone_config), "--data", str(corrupt)], capsys)
    assert code == 3 and rep["error"]["type"] == "UnknownCategory"
    corrupt.write_text("sex,age\nF,7\n")
    code, rep, _ = _run(["criterion", "--config", str(abalone_config), "--data", str(corrupt)], capsys)
    assert code == 3 and rep["error"]["type"] == "MissingColumn"
    empty = tmp_path / "empty.csv"
    empty.write_text("")
    code, rep, _ = _run(["multinomial", "--counts", str(empty)], capsys)
    assert code == 3


def test_numeric_error_exit_4(tmp_path, capsys):
    counts = tmp_path / "counts.csv"
    counts.write_text("cell,count\na,5\nb,0\nc,7\n")
    code, rep, _ = _run(["multinomial", "--counts", str(counts)], capsys)
    assert code == 4 and rep["error"]["type"] == "ZeroCell"
    code, rep, _ = _run(["multinomial", "--counts", str(counts), "--pseudo-count", "0.5"], capsys)
    assert code == 0


def test_byte_identical_reports(tmp_path, abalone_config):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["criterion", "--config", str(abalone_config), "-o", str(a)]) == 0
    assert main(["criterion", "--config", str(abalone_config), "-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_seed_env_override(tmp_path, monkeypatch, capsys):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({"seed": 1, "scenario": {"kind": "multinomial", "n": 50, "replications": 200,
                                                        "params": {"m": [0.3, 0.7]}}}))
    _, plain, _ = _run(["simulate", "--config", str(cfg)], capsys)
    monkeypatch.setenv("PN_SEED", "5")
    _, over, _ = _run(["simulate", "--config", str(cfg)], capsys)
    assert plain["config"]["scenario"]["seed"] == 1
    assert over["config"]["scenario"]["seed"] == 5
    assert plain["result"]["rows"][0]["empirical_risk"] != over["result"]["rows"][0]["empirical_risk"]


def test_simulate_requires_seed(tmp_path, capsys):
    cfg = tmp_path / "sim.json"
    cfg.write_text(json.dumps({"scenario": {"kind": "multinomial", "n": 50, "params": {"m": [0.3, 0.7]}}}))
    code, rep, _ = _run(["simulate", "--config", str(cfg)], capsys)
    assert code == 2


def test_report_schema_round_trip(abalone_counts_path, capsys):
    _, rep, text = _run(["multinomial", "--counts", abalone_counts_path], capsys)
    assert set(rep) == {"schema", "version", "config", "result", "exit_code"}
    assert rep["schema"] == SCHEMA_VERSION
    assert dumps(json.loads(text)) == text
    assert {"first_order", "second_order", "total", "decision", "threshold"} <= set(rep["result"])


def test_compare_command(tmp_path, data_dir, abalone_raw_path, capsys):
    schema = json.loads((data_dir / "abalone_schema.json").read_text())
    cfg = {"data": {"path": abalone_raw_path, "schema": schema},
           "models": [{"kind": "multinomial", "column": "sex"},
                      {"kind": "categorical", "column": "sex", "design": [[0.0], [1.0], [2.0]]}],
           "names": ["full", "linear"]}
    path = tmp_path / "cmp.json"
    path.write_text(json.dumps(cfg))
    code, rep, _ = _run(["compare", "--config", str(path)], capsys)
    assert code == 0
    assert rep["result"]["verdict"] == "Comparable"
    assert [m["name"] for m in rep["result"]["models"]] == ["full", "linear"]


def test_console_script(abalone_counts_path):
    out = subprocess.run([sys.executable, "-m", "pncriterion.cli", "threshold", "--alpha", "0.01"],
                         capture_output=True, text=True, check=True).stdout
    assert json.loads(out)["result"]["C"] == 0.0008


def test_generic_pipeline_structure(tmp_path, capsys):
    rng = np.random.default_rng(0)
    n = 300
    q = rng.integers(3, 9, n)
    X = rng.gamma(4.0, 1.0, (n, 4)) + 0.1 * q[:, None]
    csv = tmp_path / "w.csv"
    csv.write_text("a;b;c;d;quality\n" + "\n".join(
        ";".join(f"{v:.5f}" for v in row) + f";{k}" for row, k in zip(X, q)) + "\n")
    cols = ["a", "b", "c", "d"]
    cfg = {
        "data": {"path": str(csv), "schema": {"delimiter": ";", "continuous": cols, "categorical": ["quality"],
                                              "offset": {"quality": 2}, "as_value": ["quality"]}},
        "model": {"kind": "generic", "rescale": "twice_max",
                  "basis": {"pairwise": cols, "cross": "quality", "filter_cutoff": 0.95},
                  "reference": {"continuous": cols, "categorical": ["quality"]}},
        "method": {"n_draws": 5000},
        "sampler": {"n_chains": 2, "burn_in": 500, "steps": 3000},
        "seed": 3,
    }
    path = tmp_path / "g.json"
    path.write_text(json.dumps(cfg))
    code, rep, _ = _run(["criterion", "--config", str(path)], capsys)
    assert code == 0, rep.get("error")
    res = rep["result"]
    assert res["model"]["p_full"] == 10
    assert res["model"]["n_estimate"] == res["n"] == 150
    assert res["total"] > 0
    assert set(res["sampler"]) == {"exact_sampler", "acceptance", "split_chain_discrepancy"}
    code, rep2, _ = _run(["criterion", "--config", str(path)], capsys)
    assert rep2 == rep
