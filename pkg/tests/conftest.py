#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
测试公共夹具：小型模型、观测序列以及逐路径枚举的参照实现
"""

import itertools
import logging
import math

import numpy as np
import pytest

from common.distributions import Gamma
from common.hmm_model import HmmSpec, ObservationSeries, log_emission_matrix


@pytest.fixture(autouse=True)
def _quiet_logging(caplog):
    caplog.set_level(logging.WARNING)


@pytest.fixture
def two_state_model():
    tpm = np.array([[0.9, 0.1], [0.2, 0.8]])
    return HmmSpec(tpm, ((Gamma(0.5, 0.7), Gamma(4.0, 2.5)),))


@pytest.fixture
def three_state_model():
    tpm = np.array([[0.8, 0.15, 0.05], [0.1, 0.7, 0.2], [0.25, 0.05, 0.7]])
    return HmmSpec(tpm, ((Gamma(0.5, 2.0), Gamma(1.5, 3.0), Gamma(3.0, 4.0)),))


@pytest.fixture
def short_series():
    return ObservationSeries.single([0.3, 0.4, 3.5, 5.1, 0.2])


def random_gamma_model(rng, n_states, n_channels=1):
    tpm = rng.dirichlet(np.ones(n_states) * 2.0, size=n_states)
    channels = []
    for _ in range(n_channels):
        channels.append(tuple(Gamma(float(rng.uniform(0.3, 5.0)), float(rng.uniform(0.5, 4.0)))
                              for _ in range(n_states)))
    return HmmSpec(tpm, tuple(channels))


def enumerate_paths(model, track):
    """
    枚举所有状态路径的联合对数概率 log p(x, s)

    返回:
        [(路径, 对数概率)]，按路径字典序
    """
    track = np.asarray(track, dtype=float)
    if track.ndim == 1:
        track = track[:, None]
    log_b = log_emission_matrix(model, track)
    with np.errstate(divide="ignore"):
        log_delta = np.log(model.delta)
        log_tpm = np.log(model.tpm)
    paths = []
    for path in itertools.product(range(model.n_states), repeat=len(track)):
        value = log_delta[path[0]] + log_b[0, path[0]]
        for t in range(1, len(path)):
            value += log_tpm[path[t - 1], path[t]] + log_b[t, path[t]]
        paths.append((path, float(value)))
    return paths


def enumerated_log_likelihood(model, track):
    values = np.array([v for _, v in enumerate_paths(model, track)])
    top = np.max(values)
    return float(top + math.log(np.sum(np.exp(values - top))))


def enumerated_viterbi(model, track):
    """联合概率最大的路径，相等时取字典序最小的路径"""
    best_path, best_value = None, -math.inf
    for path, value in enumerate_paths(model, track):
        if value > best_value:
            best_path, best_value = path, value
    return np.array(best_path)


def enumerated_one_step_cdf(model, track, t, channel=0):
    """
    P(X_t <= x_t | x_1..x_{t−1}) 的枚举参照：对前t个时刻的路径求和得到预测状态概率
    """
    track = np.asarray(track, dtype=float)
    if track.ndim == 1:
        track = track[:, None]
    n = model.n_states
    if t == 0:
        weights = np.asarray(model.delta)
    else:
        joint = np.zeros(n)
        for path, value in enumerate_paths(model, track[:t]):
            joint += math.exp(value) * model.tpm[path[-1]]
        weights = joint / joint.sum()
    x = track[t, channel]
    return float(sum(w * float(d.cdf(x)) for w, d in zip(weights, model.channels[channel])))
