import csv
import json
import shutil
import subprocess
import sys

import pytest

from multidefer.cli import main


def _run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def _error_line(err):
    lines = [ln for ln in err.splitlines() if ln.strip()]
    assert len(lines) == 1
    payload = json.loads(lines[0])
    assert set(payload) == {"error", "message"}
    return payload


def test_pipeline_grouped(tmp_path, capsys):
    data, experts, model = tmp_path / "d.csv", tmp_path / "e.csv", tmp_path / "model"
    code, out, _ = _run(capsys, "gen-data", "--kind", "grouped", "--seed", "1", "--n", "200", "--dim", "3", "--out", str(data))
    assert code == 0 and json.loads(out)["rows"] == 200
    assert (tmp_path / "d.csv.meta.json").exists()
    code, out, _ = _run(capsys, "gen-experts", "--data", str(data), "--seed", "2", "--m", "6", "--out", str(experts))
    assert code == 0 and json.loads(out)["experts"] == 5
    code, out, _ = _run(
        capsys, "train", "--data", str(data), "--experts", str(experts), "--seed", "3", "--out", str(model),
        "--iters", "30", "--eta", "0.1", "--fairness", "minimax", "--minimax-rounds", "3", "--minimax-inner-steps", "10",
    )
    assert code == 0 and json.loads(out)["iterations"] == 30
    for name in ("classifier.ckpt", "deferrer.ckpt", "train_config.json", "train_report.json", "standardizer.json"):
        assert (model / name).exists()
    assert json.loads((model / "train_config.json").read_text())["seed"] == 3

    preds = tmp_path / "p.csv"
    code, _, _ = _run(capsys, "predict", "--model", str(model), "--data", str(data), "--experts", str(experts),
                      "--out", str(preds), "--k", "2", "--seed", "4")
    assert code == 0
    rows = list(csv.reader(preds.open()))
    assert rows[0] == ["sample_id", "label_pred", "committee"] and len(rows) == 201
    assert all(len(r[2].split(";")) == 2 for r in rows[1:])

    report = tmp_path / "r.json"
    code, out, _ = _run(capsys, "evaluate", "--predictions", str(preds), "--data", str(data),
                        "--num-workers", "6", "--out", str(report))
    assert code == 0
    rep = json.loads(report.read_text())
    assert 0.0 <= rep["overall_accuracy"] <= 1.0 and abs(sum(rep["loads"]) - 1) < 1e-12


def test_full_committee_prediction_has_empty_committee(tmp_path, capsys):
    data, experts, model = tmp_path / "d.csv", tmp_path / "e.csv", tmp_path / "m"
    _run(capsys, "gen-data", "--kind", "three-cluster", "--seed", "0", "--n", "150", "--out", str(data))
    code, _, _ = _run(capsys, "gen-experts", "--kind", "cluster", "--data", str(data), "--seed", "1", "--out", str(experts))
    assert code == 0
    _run(capsys, "train", "--data", str(data), "--experts", str(experts), "--seed", "0", "--out", str(model), "--iters", "5")
    preds = tmp_path / "p.csv"
    code, _, _ = _run(capsys, "predict", "--model", str(model), "--data", str(data), "--experts", str(experts), "--out", str(preds))
    assert code == 0
    assert all(r[2] == "" for r in list(csv.reader(preds.open()))[1:])


def test_generators_are_reproducible(tmp_path, capsys):
    for name in ("a", "b"):
        _run(capsys, "gen-data", "--kind", "grouped", "--seed", "5", "--n", "50", "--out", str(tmp_path / f"{name}.csv"))
        _run(capsys, "gen-experts", "--data", str(tmp_path / f"{name}.csv"), "--seed", "6", "--m", "4",
             "--coverage", "0.5", "--out", str(tmp_path / f"{name}_e.csv"))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a_e.csv").read_bytes() == (tmp_path / "b_e.csv").read_bytes()


@pytest.mark.parametrize("cmd", [
    ["gen-data", "--out", "x.csv"],
    ["gen-experts", "--data", "x.csv", "--out", "y.csv"],
    ["train", "--data", "x.csv", "--experts", "y.csv", "--out", "m"],
    ["repro-sec31", "--out", "o"],
])
def test_seed_is_mandatory(cmd, capsys):
    with pytest.raises(SystemExit) as exc:
        main(cmd)
    assert exc.value.code == 2
    payload = _error_line(capsys.readouterr().err)
    assert payload["error"] == "UsageError" and "--seed" in payload["message"]


def test_unknown_subcommand(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["fly"])
    assert exc.value.code == 2
    _error_line(capsys.readouterr().err)


def test_missing_file_is_a_json_error(tmp_path, capsys):
    code, _, err = _run(capsys, "gen-experts", "--data", str(tmp_path / "none.csv"), "--seed", "0", "--out", str(tmp_path / "e.csv"))
    assert code == 1
    assert _error_line(err)["error"] in {"FileNotFoundError", "OSError"}


def test_bad_config_key_is_reported(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"seed": 0, "learning_rate": 3}))
    code, _, err = _run(capsys, "evaluate", "--config", str(cfg), "--out", str(tmp_path / "o"))
    assert code == 1
    payload = _error_line(err)
    assert payload["error"] == "ConfigError" and "learning_rate" in payload["message"]
    code, _, err = _run(capsys, "evaluate", "--config", str(cfg))
    assert code == 1 and _error_line(err)["error"] == "CliError"


def test_bad_train_option(tmp_path, capsys):
    data, experts = tmp_path / "d.csv", tmp_path / "e.csv"
    _run(capsys, "gen-data", "--kind", "grouped", "--seed", "1", "--n", "40", "--out", str(data))
    _run(capsys, "gen-experts", "--data", str(data), "--seed", "2", "--m", "3", "--out", str(experts))
    code, _, err = _run(capsys, "train", "--data", str(data), "--experts", str(experts), "--seed", "0",
                        "--out", str(tmp_path / "m"), "--eta", "-1")
    assert code == 1 and "eta" in _error_line(err)["message"]


def test_cluster_experts_need_cluster_metadata(tmp_path, capsys):
    data = tmp_path / "d.csv"
    _run(capsys, "gen-data", "--kind", "grouped", "--seed", "1", "--n", "40", "--out", str(data))
    code, _, err = _run(capsys, "gen-experts", "--kind", "cluster", "--data", str(data), "--seed", "0", "--out", str(tmp_path / "e.csv"))
    assert code == 1 and _error_line(err)["error"] == "CliError"


def test_evaluate_config_and_sweep(tmp_path, capsys):
    base = {"n": 200, "dim": 3, "num_experts": 5, "methods": ["ll"]}
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps(base))
    code, out, _ = _run(capsys, "evaluate", "--config", str(cfg), "--out", str(tmp_path / "run"))
    assert code == 0 and "ll" in json.loads(out)
    assert (tmp_path / "run" / "aggregate.json").exists()
    spec = tmp_path / "s.json"
    spec.write_text(json.dumps({"param": "k", "values": [1, 3], "repetitions": 2, "base_config": base}))
    code, out, _ = _run(capsys, "sweep", "--spec", str(spec), "--out", str(tmp_path / "sw"))
    assert code == 0 and json.loads(out) == {"cells": 4, "failed": 0, "out": str(tmp_path / "sw")}


def test_console_script_reports_errors(tmp_path):
    exe = shutil.which("multidefer")
    cmd = [exe] if exe else [sys.executable, "-m", "multidefer.cli"]
    ok = subprocess.run(cmd + ["gen-data", "--seed", "0", "--n", "30", "--out", str(tmp_path / "d.csv")],
                        capture_output=True, text=True)
    assert ok.returncode == 0, ok.stderr
    bad = subprocess.run(cmd + ["train", "--data", str(tmp_path / "d.csv")], capture_output=True, text=True)
    assert bad.returncode == 2 and json.loads(bad.stderr.strip().splitlines()[-1])["error"] == "UsageError"
