#!/usr/bin/env python
# -*- coding: utf-8 -*-

import json
import logging

import pandas as pd
import pytest

from main import main


@pytest.fixture(autouse=True)
def _workspace(tmp_path, monkeypatch):
    """在临时目录中运行，并在结束后恢复根日志器"""
    monkeypatch.chdir(tmp_path)
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield tmp_path
    for handler in list(root.handlers):
        if handler not in handlers:
            root.removeHandler(handler)
            handler.close()
    for handler in handlers:
        if handler not in root.handlers:
            root.addHandler(handler)
    root.setLevel(level)


def _config(path, payload):
    path.write_text(json.dumps(payload), encoding="utf-8")
    return str(path)


def _last_error(capsys):
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("{")]
    return json.loads(lines[-1])


def test_simulate_writes_dataset_and_manifest(tmp_path):
    config = _config(tmp_path / "sim.json", {"scenario": "8", "T": 200})
    assert main(["simulate", "--config", config, "--seed", "3", "--out", "run", "--quiet"]) == 0
    frame = pd.read_csv(tmp_path / "run" / "dataset.csv")
    assert len(frame) == 200
    assert frame["slot"].tolist() == list(range(1, 201))
    assert set(frame["state"]) <= {1, 2}
    truth = json.loads((tmp_path / "run" / "truth.json").read_text(encoding="utf-8"))
    assert truth["n_states"] == 2
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text(encoding="utf-8"))
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 3
    assert manifest["outputs"] == ["dataset.csv", "truth.json"]
    assert "out" not in manifest["config"]


def test_same_seed_gives_identical_files(tmp_path):
    config = _config(tmp_path / "sim.json", {"scenario": "1", "T": 300})
    assert main(["simulate", "--config", config, "--seed", "5", "--out", "a", "--quiet"]) == 0
    assert main(["simulate", "--config", config, "--seed", "5", "--out", "b", "--quiet"]) == 0
    for name in ("dataset.csv", "truth.json", "manifest.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    truth = json.loads((tmp_path / "a" / "truth.json").read_text(encoding="utf-8"))
    assert len(truth["contaminated_slots"]) == 1
    assert min(truth["contaminated_slots"]) >= 1


def test_simulate_select_fit_diagnose(tmp_path):
    assert main(["simulate", "--config", _config(tmp_path / "sim.json", {"scenario": "8", "T": 300}),
                 "--seed", "7", "--out", "data", "--quiet"]) == 0

    select = _config(tmp_path / "select.json", {"data": "data/dataset.csv", "n_range": [1, 2], "starts": 2})
    assert main(["select", "--config", select, "--seed", "7", "--out", "select", "--quiet"]) == 0
    criteria = pd.read_csv(tmp_path / "select" / "criteria.csv")
    assert criteria["n_states"].tolist() == [1, 2]
    assert criteria["bic_winner"].sum() == 1
    fits = json.loads((tmp_path / "select" / "fits.json").read_text(encoding="utf-8"))
    assert sorted(fits) == ["1", "2"]

    fit_config = _config(tmp_path / "fit.json", {"data": "data/dataset.csv", "n_states": 2, "starts": 2})
    assert main(["fit", "--config", fit_config, "--out", "fit", "--quiet"]) == 0
    assert (tmp_path / "fit" / "fit_result.json").exists()

    diagnose = _config(tmp_path / "diagnose.json", {"data": "data/dataset.csv", "fit_result": "fit/fit_result.json",
                                                     "max_lag": 5, "simulation_check_runs": 5})
    assert main(["diagnose", "--config", diagnose, "--out", "diag", "--quiet"]) == 0
    residuals = pd.read_csv(tmp_path / "diag" / "residuals.csv")
    assert len(residuals) == 300
    acf = pd.read_csv(tmp_path / "diag" / "residual_acf.csv")
    assert acf["lag"].tolist() == list(range(6))
    manifest = json.loads((tmp_path / "diag" / "manifest.json").read_text(encoding="utf-8"))
    assert "summary.json" in manifest["outputs"]


def test_unknown_flag_is_a_config_error(capsys):
    assert main(["simulate", "--bogus"]) == 2
    assert _last_error(capsys)["error"] == "ConfigError"


def test_unknown_command_is_a_config_error(capsys):
    assert main(["train"]) == 2
    assert _last_error(capsys)["error"] == "ConfigError"


def test_missing_output_directory(tmp_path, capsys):
    config = _config(tmp_path / "sim.json", {"scenario": "8", "T": 50})
    assert main(["simulate", "--config", config, "--quiet"]) == 2
    error = _last_error(capsys)
    assert error["error"] == "ConfigError"
    assert not (tmp_path / "manifest.json").exists()


def test_unreadable_config(tmp_path, capsys):
    (tmp_path / "broken.json").write_text("{not json", encoding="utf-8")
    assert main(["simulate", "--config", "broken.json", "--out", "x", "--quiet"]) == 2
    assert _last_error(capsys)["error"] == "ConfigError"


def test_missing_dataset_is_a_data_error(tmp_path, capsys):
    config = _config(tmp_path / "select.json", {"data": "nowhere.csv", "n_range": [2]})
    assert main(["select", "--config", config, "--out", "x", "--quiet"]) == 3
    assert _last_error(capsys)["error"] == "DataError"


def test_unknown_scenario_is_a_config_error(tmp_path, capsys):
    config = _config(tmp_path / "sim.json", {"scenario": "42", "T": 50})
    assert main(["simulate", "--config", config, "--out", "x", "--quiet"]) == 2
    assert _last_error(capsys)["error"] == "ConfigError"
