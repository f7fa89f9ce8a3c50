#!/usr/bin/env python
# -*- coding: utf-8 -*-

import json
import logging

import numpy as np
import pytest

from common.errors import ConfigError, DataError
from common.hmm_model import HmmSpec, ObservationSeries, log_likelihood
from src.services.scenario_service import ScenarioConfig, generate
from src.utils import serialization
from src.utils.log_config import current_settings, setup_logging
from src.utils.memory_monitor import default_workers, resolve_workers, snapshot


@pytest.fixture
def restore_root_logger():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield root
    for handler in list(root.handlers):
        if handler not in handlers:
            root.removeHandler(handler)
            handler.close()
    for handler in handlers:
        if handler not in root.handlers:
            root.addHandler(handler)
    root.setLevel(level)


def test_resolve_workers():
    assert default_workers() >= 1
    assert resolve_workers(None) == default_workers()
    assert resolve_workers(0) == default_workers()
    assert resolve_workers(3) == 3


def test_snapshot_reports_memory():
    info = snapshot()
    assert info["rss_mb"] > 0
    assert info["cpu_count"] >= 1


def test_quiet_console_is_remembered(restore_root_logger, tmp_path):
    setup_logging(level="INFO", log_file=str(tmp_path / "run.log"), quiet=True)
    assert current_settings() == {"level": "INFO", "quiet": True}
    logging.getLogger("hmmlab.test").info("写入文件")
    for handler in restore_root_logger.handlers:
        handler.flush()
    assert "写入文件" in (tmp_path / "run.log").read_text(encoding="utf-8")
    setup_logging(level="DEBUG", log_file=None)
    assert current_settings() == {"level": "DEBUG", "quiet": False}


def test_dataset_file_keeps_tracks_labels_and_states(tmp_path):
    data = ObservationSeries((np.array([0.5, np.nan, 1.25]), np.array([2.0, 3.5])),
                             (np.array([0, 1, 2]), np.array([95, 0])))
    states = [np.array([0, 1, 1]), np.array([1, 0])]
    path = tmp_path / "dataset.csv"
    serialization.write_dataset(path, data, states)
    again, again_states = serialization.read_dataset(path)
    assert again.lengths == [3, 2]
    np.testing.assert_array_equal(again.tracks[0], data.tracks[0])
    np.testing.assert_array_equal(again.time_labels[1], [95, 0])
    np.testing.assert_array_equal(again_states[0], [0, 1, 1])
    header = path.read_text(encoding="utf-8").splitlines()[0]
    assert header == "track,slot,label,x0,state"


def test_scenario_dataset_reads_back_exactly(tmp_path):
    output = generate(ScenarioConfig(scenario_id="8", T=5000, seed=12))
    path = tmp_path / "dataset.csv"
    serialization.write_dataset(path, output.data, output.true_states)
    again, _ = serialization.read_dataset(path)
    assert np.array_equal(again.tracks[0], output.data.tracks[0])
    model = HmmSpec.from_dict(output.truth["model"])
    assert log_likelihood(model, again) == log_likelihood(model, output.data)


def test_dataset_without_states(tmp_path):
    path = tmp_path / "dataset.csv"
    serialization.write_dataset(path, ObservationSeries.single([1.0, 2.0, 3.0]))
    data, states = serialization.read_dataset(path)
    assert states is None
    assert data.time_labels is None


def test_dataset_errors(tmp_path):
    with pytest.raises(DataError):
        serialization.read_dataset(tmp_path / "absent.csv")
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n", encoding="utf-8")
    with pytest.raises(DataError):
        serialization.read_dataset(tmp_path / "bad.csv")


def test_jsonl_records(tmp_path):
    path = tmp_path / "records.jsonl"
    count = serialization.write_jsonl(path, [{"n": np.int64(2), "x": np.float64(0.5)},
                                             {"v": np.array([1, 2])}])
    assert count == 2
    assert list(serialization.read_jsonl(path)) == [{"n": 2, "x": 0.5}, {"v": [1, 2]}]
    path.write_text('{"n": 1}\nnot json\n', encoding="utf-8")
    with pytest.raises(DataError):
        list(serialization.read_jsonl(path))


def test_read_json_errors(tmp_path):
    with pytest.raises(ConfigError):
        serialization.read_json(tmp_path / "absent.json")
    (tmp_path / "broken.json").write_text("{", encoding="utf-8")
    with pytest.raises(ConfigError):
        serialization.read_json(tmp_path / "broken.json")


def test_manifest(tmp_path):
    config = {"scenario": "8", "T": 100, "seed": 4}
    manifest = serialization.write_manifest(tmp_path, "simulate", config, 4, ["truth.json", "dataset.csv"])
    assert manifest["outputs"] == ["dataset.csv", "truth.json"]
    assert manifest["config_sha256"] == serialization.config_hash({"T": 100, "seed": 4, "scenario": "8"})
    assert manifest["versions"]["numpy"] == np.__version__
    written = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert written == manifest
