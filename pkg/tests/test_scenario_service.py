#!/usr/bin/env python
# -*- coding: utf-8 -*-

import math

import numpy as np
import pytest

from common.distributions import Gamma, GammaMixture
from common.errors import ConfigError, InvalidParameterError
from common.hmm_model import HmmSpec, ObservationSeries, log_likelihood
from src.services.scenario_service import (
    ScenarioConfig, baseline_model, diel_tpm, equivalent_three_state_tpm, generate, true_n_states,
    true_parameters,
)


def _runs(states):
    """(状态, 长度)序列，不含最后一段（可能被截断）"""
    change = np.flatnonzero(np.diff(states)) + 1
    starts = np.concatenate([[0], change])
    ends = np.concatenate([change, [len(states)]])
    return [(int(states[s]), int(e - s)) for s, e in zip(starts, ends)][:-1]


def test_baseline_model():
    model = baseline_model()
    np.testing.assert_allclose(model.tpm, [[0.9, 0.1], [0.1, 0.9]])
    np.testing.assert_allclose(model.delta, [0.5, 0.5])
    assert [d.mean for d in model.channels[0]] == [0.5, 4.0]
    assert [d.shape for d in model.channels[0]] == [0.7, 2.5]
    # 状态1的停留时间 p(k) = 0.1·0.9^(k−1)
    stay = model.tpm[0, 0]
    assert (1 - stay) == pytest.approx(0.1)
    assert stay * (1 - stay) == pytest.approx(0.09)


def test_generation_is_deterministic():
    config = ScenarioConfig(scenario_id="8", T=300, seed=5)
    a, b = generate(config), generate(config)
    np.testing.assert_array_equal(a.data.tracks[0], b.data.tracks[0])
    np.testing.assert_array_equal(a.true_states[0], b.true_states[0])
    other = generate(ScenarioConfig(scenario_id="8", T=300, seed=5, spawn_key=(1,)))
    assert not np.array_equal(a.data.tracks[0], other.data.tracks[0])


@pytest.mark.parametrize("scenario, length, n_tracks", [
    ("baseline", 5000, 1), ("1", 5000, 1), ("2", 5000, 1), ("3", 5000, 1), ("4", 500, 10),
    ("5", 5000, 1), ("6", 5000, 1), ("7", 5000, 1), ("8", 5000, 1), ("9", 1000, 1), ("10", 2000, 1),
])
def test_default_sample_sizes(scenario, length, n_tracks):
    output = generate(ScenarioConfig(scenario_id=scenario))
    assert output.data.n_tracks == n_tracks
    assert output.data.lengths == [length] * n_tracks
    assert [len(s) for s in output.true_states] == [length] * n_tracks
    assert output.truth["scenario_id"] == scenario
    assert output.truth["n_states"] == true_n_states(scenario)


def test_outliers_contaminate_exactly_quarter_percent():
    clean = generate(ScenarioConfig(scenario_id="baseline", seed=3))
    dirty = generate(ScenarioConfig(scenario_id="1", seed=3))
    index = np.array(dirty.truth["contaminated_indices"])
    assert len(index) == 25
    assert dirty.truth["contamination_mask"].sum() == 25
    shift = dirty.data.tracks[0][:, 0] - clean.data.tracks[0][:, 0]
    assert np.all((shift[index] >= 10.0) & (shift[index] <= 20.0))
    assert np.count_nonzero(shift) == 25


def test_outlier_fraction_is_validated():
    with pytest.raises(ConfigError):
        generate(ScenarioConfig.from_dict({"scenario": "1", "T": 100, "knobs": {"outlier_fraction": 1.5}}))


def test_spline_scenario_truth():
    output = generate(ScenarioConfig(scenario_id="2", T=500, seed=2))
    parameters = output.truth["parameters"]
    assert parameters["mean_1"] == 0.5
    assert parameters["mean_2"] > 0.5
    values = output.data.tracks[0][:, 0]
    assert np.all(values[output.true_states[0] == 1] > 0)


def test_diel_scenario_labels_and_cycle():
    output = generate(ScenarioConfig(scenario_id="3", T=9600, seed=4))
    labels = output.data.time_labels[0]
    np.testing.assert_array_equal(labels, np.arange(9600) % 96)
    states = output.true_states[0]
    night = np.isin(labels, list(range(0, 8)) + list(range(88, 96)))
    day = (labels >= 40) & (labels < 56)
    assert np.mean(states[night] == 1) > np.mean(states[day] == 1) + 0.3


def test_diel_tpm_rows():
    matrix = diel_tpm(0, -2.2, 1.5, 0, 96)
    np.testing.assert_allclose(matrix.sum(axis=1), 1.0)
    assert matrix[0, 1] > diel_tpm(48, -2.2, 1.5, 0, 96)[0, 1]


def test_heterogeneity_draws_per_track_means():
    output = generate(ScenarioConfig(scenario_id="4", seed=6))
    means = np.array(output.truth["track_state2_means"])
    assert len(means) == 10
    assert np.mean(np.log(means)) == pytest.approx(math.log(4.0), abs=0.15)
    assert len(set(means.tolist())) == 10


def test_poisson_dwell_runs():
    output = generate(ScenarioConfig(scenario_id="5", seed=7))
    runs = _runs(output.true_states[0])
    state2 = np.array([length for state, length in runs if state == 1])
    state1 = np.array([length for state, length in runs if state == 0])
    assert state2.min() >= 1
    assert np.mean(state2) == pytest.approx(3.0, abs=0.25)
    assert np.mean(state1) == pytest.approx(10.0, abs=1.5)


def test_second_order_switch_frequencies():
    states = generate(ScenarioConfig(scenario_id="6", T=100_000, seed=8)).true_states[0]
    entered = states[1:-1] != states[:-2]
    switched = states[2:] != states[1:-1]
    assert np.mean(switched[entered]) == pytest.approx(0.05, abs=0.01)
    assert np.mean(switched[~entered]) == pytest.approx(0.25, abs=0.01)


def test_autocorrelated_means():
    output = generate(ScenarioConfig(scenario_id="7", seed=9))
    log_means = np.asarray(output.truth["log_means"])
    for column, level in zip(log_means.T, (math.log(0.5), math.log(4.0))):
        assert np.corrcoef(column[:-1], column[1:])[0, 1] > 0.3
        assert np.mean(column) == pytest.approx(level, abs=0.2)


def test_appendix_scenario_nine():
    output = generate(ScenarioConfig(scenario_id="9"))
    parameters = output.truth["parameters"]
    assert [parameters[f"mean_{i}"] for i in (1, 2, 3)] == [0.5, 1.5, 3.0]
    assert [parameters[f"shape_{i}"] for i in (1, 2, 3)] == [2.0, 3.0, 4.0]
    assert parameters["tpm_1_1"] == pytest.approx(0.9)
    assert parameters["tpm_1_2"] == pytest.approx(0.05)
    assert true_n_states("9") == 3


def test_appendix_scenario_ten_is_sorted():
    parameters = generate(ScenarioConfig(scenario_id="10", T=200)).truth["parameters"]
    assert [parameters[f"mean_{i}"] for i in (1, 2, 3)] == [1.0, 3.0, 5.5]
    assert parameters["tpm_1_1"] == pytest.approx(0.8)


def test_equivalent_three_state_matrix():
    matrix = equivalent_three_state_tpm(0.9, 0.9, 0.5)
    np.testing.assert_allclose(matrix[0], [0.9, 0.05, 0.05])
    np.testing.assert_allclose(matrix[1], matrix[2])
    np.testing.assert_allclose(matrix.sum(axis=1), 1.0)
    nearly_pure = equivalent_three_state_tpm(0.9, 0.9, 1 - 1e-9)
    assert np.all(nearly_pure[:, 2] < 1e-8)


def test_equivalent_three_state_likelihood():
    g11, g22, alpha = 0.85, 0.75, 0.3
    first, second, third = Gamma(0.5, 0.7), Gamma(2.0, 3.0), Gamma(6.0, 4.0)
    mixture_model = HmmSpec(np.array([[g11, 1 - g11], [1 - g22, g22]]),
                            ((first, GammaMixture((alpha, 1 - alpha), (second, third))),))
    expanded = HmmSpec(equivalent_three_state_tpm(g11, g22, alpha), ((first, second, third),))
    data = ObservationSeries.single([0.2, 2.5, 7.0, 5.1, 0.4, 1.9])
    assert log_likelihood(expanded, data) == pytest.approx(log_likelihood(mixture_model, data), rel=1e-10)


@pytest.mark.parametrize("args", [(1.2, 0.9, 0.5), (0.9, 0.9, 0.0), (0.9, 0.9, 1.0)])
def test_equivalent_three_state_rejects_bad_input(args):
    with pytest.raises(InvalidParameterError):
        equivalent_three_state_tpm(*args)


def test_config_validation():
    with pytest.raises(ConfigError):
        ScenarioConfig(scenario_id="11")
    with pytest.raises(ConfigError):
        ScenarioConfig(scenario_id="8", T=1)
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict({"scenario": "8", "length": 100})


def test_knobs_merge_with_defaults():
    config = ScenarioConfig.from_dict({"scenario": "baseline", "T": 100,
                                       "knobs": {"baseline": {"leave_probability": 0.2}}})
    assert config.knobs["baseline"]["means"] == (0.5, 4.0)
    model = baseline_model(**config.knobs["baseline"])
    np.testing.assert_allclose(model.tpm, [[0.8, 0.2], [0.2, 0.8]])


@pytest.mark.parametrize("scenario", ["baseline", "1", "2", "3", "4", "5", "6", "7", "8", "9", "10"])
def test_true_parameters_match_generated_truth(scenario):
    config = ScenarioConfig(scenario_id=scenario, T=60, seed=3)
    assert true_parameters(config) == generate(config).truth["parameters"]
