#!/usr/bin/env python
# -*- coding: utf-8 -*-

import math

import pandas as pd
import pytest

from common.errors import ConfigError
from src.services import bench_service
from src.services.bench_service import ExperimentPlan, bias_summary, recompute_tables, run_experiment, selection_table

DESK_CONFIG = {"scenario": "8", "T": 300, "replicates": 2, "n_range": [2, 3], "starts": 2, "seed": 1,
               "workers": 1}


def _record(replicate, n_states, log_lik, complete, n_params, **extra):
    record = {"replicate": replicate, "n_states": n_states, "log_lik": log_lik,
              "complete_data_log_lik": complete, "n_params": n_params, "data_size": 100,
              "parameters": {"mean_1": 0.5 + replicate * 0.1, "shape_1": 0.7, "tpm_1_1": 0.9},
              "boundary_fallback": False}
    record.update(extra)
    return record


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("bench")
    result = run_experiment(ExperimentPlan.from_dict(DESK_CONFIG, out_dir=out))
    return out, result


def test_desk_run_writes_tables(desk_run):
    out, result = desk_run
    for name in (bench_service.RECORDS_FILE, bench_service.SELECTION_FILE, bench_service.BIAS_FILE,
                 bench_service.SUMMARY_FILE, bench_service.TRUTH_FILE):
        assert (out / name).exists()
    assert len(result.records) == 4
    selection = pd.read_csv(out / bench_service.SELECTION_FILE)
    assert list(selection["criterion"]) == ["AIC", "BIC", "ICL"]
    if result.selection.n_valid:
        totals = selection[["N=2", "N=3"]].sum(axis=1)
        assert totals.tolist() == pytest.approx([100.0, 100.0, 100.0])
    assert result.truth["n_states"] == 2
    assert result.truth["parameters"]["mean_2"] == 4.0


def test_tables_recomputed_from_records_match(desk_run):
    out, result = desk_run
    selection, bias = recompute_tables(out / bench_service.RECORDS_FILE)
    pd.testing.assert_frame_equal(selection.percentages, result.selection.percentages)
    assert selection.n_valid == result.selection.n_valid
    pd.testing.assert_frame_equal(bias.to_frame(), result.bias.to_frame())


def test_rerun_is_byte_identical(desk_run, tmp_path):
    out, _ = desk_run
    run_experiment(ExperimentPlan.from_dict(DESK_CONFIG, out_dir=tmp_path))
    for name in (bench_service.RECORDS_FILE, bench_service.SELECTION_FILE, bench_service.BIAS_FILE,
                 bench_service.SUMMARY_FILE):
        assert (tmp_path / name).read_bytes() == (out / name).read_bytes()


def test_selection_percentages_and_exclusion():
    records = [
        _record(0, 2, -100.0, -105.0, 6), _record(0, 3, -99.0, -103.0, 12),
        _record(1, 2, -100.0, -105.0, 6), _record(1, 3, -80.0, -85.0, 12),
        _record(2, 2, -100.0, -105.0, 6), {"replicate": 2, "n_states": 3, "error": "no start converged"},
    ]
    table = selection_table(records, [2, 3])
    assert table.n_valid == 2
    assert table.n_excluded == 1
    assert table.percentages.loc["bic", 2] == 50.0
    assert table.percentages.loc["bic", 3] == 50.0
    assert table.percentages.loc["aic"].sum() == 100.0


def test_undefined_icl_leaves_row_short_of_hundred():
    records = [_record(0, 2, -100.0, None, 6), _record(0, 3, -99.0, None, 12)]
    table = selection_table(records)
    assert table.percentages.loc["icl"].sum() == 0.0
    assert table.percentages.loc["bic"].sum() == 100.0


def test_bias_with_single_replicate_has_no_sd():
    bias = bias_summary([_record(0, 2, -100.0, -105.0, 6)], {"parameters": {"mean_1": 0.5, "shape_1": 0.7}})
    frame = bias.to_frame()
    assert set(frame["parameter"]) == {"mean_1", "shape_1"}
    row = frame.set_index("parameter").loc["mean_1"]
    assert row["estimate_mean"] == pytest.approx(0.5)
    assert pd.isna(row["estimate_sd"])
    assert row["true_value"] == 0.5


def test_bias_excludes_failed_and_boundary_fits():
    records = [_record(0, 2, -100.0, -105.0, 6), _record(1, 2, -100.0, -105.0, 6),
               _record(2, 2, -100.0, -105.0, 6, boundary_fallback=True),
               {"replicate": 3, "n_states": 2, "error": "failed"}]
    bias = bias_summary(records, {"parameters": {}})
    row = bias.to_frame().set_index("parameter").loc["mean_1"]
    assert bias.n_excluded == 2
    assert row["n"] == 2
    assert row["estimate_mean"] == pytest.approx(0.55)
    assert row["estimate_sd"] == pytest.approx(math.sqrt(0.005))
    assert pd.isna(row["true_value"])


def test_plan_defaults_for_appendix_scenarios():
    plan = ExperimentPlan.from_dict({"scenario": "9", "replicates": 1, "workers": 1})
    assert plan.n_range == (2, 3, 4)
    assert plan.scenario.length == 1000
    assert plan.fit.n_starts == 150
    assert plan.out_dir is None


def test_plan_rejects_bad_config():
    with pytest.raises(ConfigError):
        ExperimentPlan.from_dict({"scenario": "8", "reps": 3})
    with pytest.raises(ConfigError):
        ExperimentPlan.from_dict({"scenario": "8", "replicates": 0, "workers": 1})
    with pytest.raises(ConfigError):
        ExperimentPlan.from_dict({"scenario": "12", "workers": 1})
