#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
情景生成服务模块
基准模型与十个误设情景的数据生成器，每个生成器同时返回真实状态与生成参数
"""

import copy
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy import special

from common.distribution_factory import get_distribution
from common.distributions import Gamma, LogNormal, PoissonDwell, Uniform
from common.errors import ConfigError, InvalidParameterError
from common.hmm_model import HmmSpec, ObservationSeries, StateSequence, sample_emissions, simulate, \
    stationary_distribution
from src.config.settings import SCENARIO_DEFAULTS

# 设置日志
logger = logging.getLogger(__name__)

SCENARIO_IDS = ("baseline", "1", "2", "3", "4", "5", "6", "7", "8", "9", "10")


def _merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


@dataclass(frozen=True)
class ScenarioConfig:
    """
    情景配置

    参数:
        scenario_id: "baseline"或"1"到"10"
        T: 序列长度（情景4为每条轨迹长度由track_length给出；情景9、10默认取各自的T）
        seed: 主种子
        knobs: 情景参数，缺省取settings.SCENARIO_DEFAULTS
        spawn_key: 派生随机流的编号前缀（重复实验中为(重复编号,)）
    """

    scenario_id: str = "baseline"
    T: Optional[int] = None
    seed: int = SCENARIO_DEFAULTS['seed']
    knobs: Dict[str, Any] = field(default_factory=lambda: copy.deepcopy(SCENARIO_DEFAULTS))
    spawn_key: Tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "scenario_id", str(self.scenario_id).lower())
        if self.scenario_id not in SCENARIO_IDS:
            raise ConfigError(f"未知情景: {self.scenario_id}，可选{list(SCENARIO_IDS)}")
        if self.T is not None and int(self.T) < 2:
            raise ConfigError(f"序列长度T必须至少为2，当前为{self.T}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ScenarioConfig":
        data = dict(data)
        known = {"scenario_id", "scenario", "T", "seed", "knobs", "spawn_key"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"未知的情景配置项: {sorted(unknown)}")
        scenario_id = data.get("scenario_id", data.get("scenario", "baseline"))
        return cls(
            scenario_id=str(scenario_id),
            T=data.get("T"),
            seed=int(data.get("seed", SCENARIO_DEFAULTS['seed'])),
            knobs=_merge(SCENARIO_DEFAULTS, data.get("knobs", {})),
            spawn_key=tuple(int(k) for k in data.get("spawn_key", ())),
        )

    @property
    def length(self) -> int:
        """单条序列长度"""
        if self.T is not None:
            return int(self.T)
        if self.scenario_id in ("9", "10"):
            return int(self.knobs[f"scenario{self.scenario_id}"]["T"])
        if self.scenario_id == "4":
            return int(self.knobs["track_length"])
        return int(self.knobs["T"])

    def rng(self) -> np.random.Generator:
        sequence = np.random.SeedSequence(entropy=int(self.seed), spawn_key=tuple(self.spawn_key))
        return np.random.default_rng(sequence)

    def to_dict(self) -> Dict[str, Any]:
        return {"scenario_id": self.scenario_id, "T": self.T, "seed": self.seed,
                "knobs": self.knobs, "spawn_key": list(self.spawn_key)}


@dataclass
class ScenarioOutput:
    """
    情景输出

    参数:
        data: 生成的观测序列
        true_states: 真实状态序列（从0开始）
        truth: 生成参数描述；parameters键为按均值升序的真实参数（mean_i、shape_i），
               情景1另有contamination_mask
    """

    data: ObservationSeries
    true_states: StateSequence
    truth: Dict[str, Any]


def baseline_model(means: Tuple[float, ...] = SCENARIO_DEFAULTS['baseline']['means'],
                   shapes: Tuple[float, ...] = SCENARIO_DEFAULTS['baseline']['shapes'],
                   leave_probability: float = SCENARIO_DEFAULTS['baseline']['leave_probability']) -> HmmSpec:
    """基准的两状态伽马HMM：离开当前状态的概率为0.1，平稳初始分布"""
    n = len(means)
    tpm = np.full((n, n), leave_probability / max(n - 1, 1))
    np.fill_diagonal(tpm, 1.0 - leave_probability)
    channel = tuple(Gamma(float(m), float(s)) for m, s in zip(means, shapes))
    return HmmSpec(tpm, (channel,))


def three_state_model(means, shapes, diagonal: float) -> HmmSpec:
    """对角元为diagonal、其余均分的三状态伽马HMM"""
    return baseline_model(tuple(means), tuple(shapes), 1.0 - float(diagonal))


def equivalent_three_state_tpm(gamma11: float, gamma22: float, alpha: float) -> np.ndarray:
    """
    状态2发射为两分量伽马混合（权重α, 1−α）的两状态HMM所对应的三状态转移矩阵

    参数:
        gamma11: 状态1的停留概率
        gamma22: 状态2的停留概率
        alpha: 第一混合分量的权重
    返回:
        3×3转移矩阵，第2、3行相同
    """
    for name, value in (("gamma11", gamma11), ("gamma22", gamma22)):
        if not 0.0 <= value <= 1.0:
            raise InvalidParameterError(f"{name}必须位于[0, 1]，当前为{value}")
    if not 0.0 < alpha < 1.0:
        raise InvalidParameterError(f"alpha必须位于(0, 1)，当前为{alpha}")
    leave1, leave2 = 1.0 - gamma11, 1.0 - gamma22
    row1 = [gamma11, alpha * leave1, (1.0 - alpha) * leave1]
    row2 = [leave2, alpha * gamma22, (1.0 - alpha) * gamma22]
    return np.array([row1, row2, row2])


def diel_tpm(label: int, intercept: float, amplitude: float, phase: int, period: int) -> np.ndarray:
    """
    情景3的时变转移矩阵

    γ12(t) = expit(a + b·cos(2π(t − t0)/P))，γ21(t) = expit(a − b·cos(2π(t − t0)/P))；
    t0附近更容易进入活跃状态（状态2）
    """
    wave = math.cos(2.0 * math.pi * (label - phase) / period)
    g12 = float(special.expit(intercept + amplitude * wave))
    g21 = float(special.expit(intercept - amplitude * wave))
    return np.array([[1.0 - g12, g12], [g21, 1.0 - g21]])


def _sample_chain(tpm_at, initial: np.ndarray, length: int, rng: np.random.Generator) -> np.ndarray:
    states = np.empty(length, dtype=np.int64)
    uniforms = rng.random(length)
    states[0] = int(np.searchsorted(np.cumsum(initial), uniforms[0], side="right"))
    for t in range(1, length):
        row = np.cumsum(tpm_at(t)[states[t - 1]])
        states[t] = min(int(np.searchsorted(row, uniforms[t], side="right")), len(initial) - 1)
    states[0] = min(states[0], len(initial) - 1)
    return states


def _gamma_truth(model: HmmSpec) -> Dict[str, float]:
    canonical = model.canonical_order()
    parameters: Dict[str, float] = {}
    for i, dist in enumerate(canonical.channels[0]):
        parameters[f"mean_{i + 1}"] = float(dist.order_key())
        if isinstance(dist, Gamma):
            parameters[f"shape_{i + 1}"] = float(dist.shape)
    for i in range(canonical.n_states):
        for j in range(canonical.n_states):
            parameters[f"tpm_{i + 1}_{j + 1}"] = float(canonical.tpm[i, j])
    return parameters


def _baseline(knobs: Dict[str, Any]) -> HmmSpec:
    base = knobs["baseline"]
    return baseline_model(tuple(base["means"]), tuple(base["shapes"]), float(base["leave_probability"]))


def _scenario_baseline(config: ScenarioConfig, rng: np.random.Generator) -> ScenarioOutput:
    model = _baseline(config.knobs)
    data, states = simulate(model, [config.length], rng)
    return ScenarioOutput(data, states, {"model": model.to_dict(), "parameters": _gamma_truth(model)})


def _scenario_outliers(config: ScenarioConfig, rng: np.random.Generator) -> ScenarioOutput:
    knobs = config.knobs
    model = _baseline(knobs)
    data, states = simulate(model, [config.length], rng)
    fraction = float(knobs["outlier_fraction"])
    if not 0.0 <= fraction < 1.0:
        raise ConfigError(f"离群点比例必须位于[0, 1)，当前为{fraction}")
    count = int(math.floor(fraction * config.length))
    lo, hi = knobs["outlier_interval"]
    index = np.sort(rng.choice(config.length, size=count, replace=False))
    values = np.array(data.tracks[0])
    values[index, 0] += np.asarray(Uniform(float(lo), float(hi)).sample(rng, count))
    mask = np.zeros(config.length, dtype=bool)
    mask[index] = True
    truth = {"model": model.to_dict(), "parameters": _gamma_truth(model),
             "contamination_mask": mask, "contaminated_indices": index.tolist()}
    return ScenarioOutput(ObservationSeries((values,)), states, truth)


def _spline(knobs: Dict[str, Any]):
    return get_distribution({"family": "spline", "table": knobs["spline_table"]})


def _spline_truth(base: HmmSpec, spline) -> Dict[str, float]:
    state1 = base.channels[0][0]
    return {"mean_1": float(state1.mean), "shape_1": float(state1.shape), "mean_2": float(spline.order_key())}


def _scenario_spline(config: ScenarioConfig, rng: np.random.Generator) -> ScenarioOutput:
    knobs = config.knobs
    spline = _spline(knobs)
    base = _baseline(knobs)
    model = HmmSpec(base.tpm, ((base.channels[0][0], spline),))
    data, states = simulate(model, [config.length], rng)
    return ScenarioOutput(data, states, {"model": model.to_dict(), "parameters": _spline_truth(base, spline)})


def _scenario_diel(config: ScenarioConfig, rng: np.random.Generator) -> ScenarioOutput:
    knobs = config.knobs
    period = int(knobs["diel_period"])
    intercept, amplitude = float(knobs["diel_intercept"]), float(knobs["diel_amplitude"])
    phase = int(knobs["diel_phase"])
    labels = np.arange(config.length, dtype=np.int64) % period
    matrices = [diel_tpm(p, intercept, amplitude, phase, period) for p in range(period)]
    base = _baseline(knobs)
    # Γ(t)为从t−1转移到t的矩阵
    states = _sample_chain(lambda t: matrices[labels[t]], stationary_distribution(matrices[0]),
                           config.length, rng)
    values = sample_emissions(base.channels, states, rng)
    data = ObservationSeries((values,), (labels,))
    truth = {"emissions": [[d.to_dict() for d in c] for c in base.channels],
             "parameters": _gamma_truth(base),
             "diel": {"intercept": intercept, "amplitude": amplitude, "phase": phase, "period": period}}
    return ScenarioOutput(data, [states], truth)


def _scenario_heterogeneity(config: ScenarioConfig, rng: np.random.Generator) -> ScenarioOutput:
    knobs = config.knobs
    base = _baseline(knobs)
    law = LogNormal(float(knobs["heterogeneity_log_mean"]), float(knobs["heterogeneity_log_sd"]))
    state1, state2 = base.channels[0]
    tracks, all_states, track_means = [], [], []
    for _ in range(int(knobs["n_tracks"])):
        mean2 = float(law.sample(rng))
        model = HmmSpec(base.tpm, ((state1, Gamma(mean2, state2.shape)),))
        data, states = simulate(model, [config.length], rng)
        tracks.append(data.tracks[0])
        all_states.extend(states)
        track_means.append(mean2)
    truth = {"model": base.to_dict(), "parameters": _gamma_truth(base), "track_state2_means": track_means}
    return ScenarioOutput(ObservationSeries(tuple(tracks)), all_states, truth)


def _scenario_dwell(config: ScenarioConfig, rng: np.random.Generator) -> ScenarioOutput:
    knobs = config.knobs
    base = _baseline(knobs)
    leave = float(knobs["baseline"]["leave_probability"])
    dwell2 = PoissonDwell(float(knobs["dwell_mean"]), str(knobs["dwell_mode"]))
    mean_dwell = np.array([1.0 / leave, float(knobs["dwell_mean"])])
    state = int(rng.random() >= mean_dwell[0] / mean_dwell.sum())
    states = np.empty(config.length, dtype=np.int64)
    filled = 0
    while filled < config.length:
        run = int(rng.geometric(leave)) if state == 0 else int(dwell2.sample(rng))
        end = min(filled + run, config.length)
        states[filled:end] = state
        filled = end
        state = 1 - state
    values = sample_emissions(base.channels, states, rng)
    truth = {"emissions": [[d.to_dict() for d in c] for c in base.channels],
             "parameters": _gamma_truth(base), "dwell": {"state_1": {"geometric": leave},
                                                          "state_2": dwell2.to_dict()}}
    return ScenarioOutput(ObservationSeries((values,)), [states], truth)


def _scenario_second_order(config: ScenarioConfig, rng: np.random.Generator) -> ScenarioOutput:
    knobs = config.knobs
    base = _baseline(knobs)
    after_stay = float(knobs["second_order_switch_after_stay"])
    after_entry = float(knobs["second_order_switch_after_entry"])
    uniforms = rng.random(config.length)
    states = np.empty(config.length, dtype=np.int64)
    states[0] = int(uniforms[0] >= 0.5)
    if config.length > 1:
        states[1] = states[0] if uniforms[1] < base.tpm[states[0], states[0]] else 1 - states[0]
    for t in range(2, config.length):
        switch = after_stay if states[t - 1] == states[t - 2] else after_entry
        states[t] = 1 - states[t - 1] if uniforms[t] < switch else states[t - 1]
    values = sample_emissions(base.channels, states, rng)
    truth = {"emissions": [[d.to_dict() for d in c] for c in base.channels],
             "parameters": _gamma_truth(base),
             "second_order": {"switch_after_stay": after_stay, "switch_after_entry": after_entry}}
    return ScenarioOutput(ObservationSeries((values,)), [states], truth)


def _scenario_autocorrelated(config: ScenarioConfig, rng: np.random.Generator) -> ScenarioOutput:
    knobs = config.knobs
    base = _baseline(knobs)
    phi = float(knobs["ar_coefficient"])
    if not -1.0 < phi < 1.0:
        raise ConfigError(f"AR(1)系数必须位于(−1, 1)，当前为{phi}")
    sd = float(knobs["ar_stationary_sd"])
    innovation_sd = sd * math.sqrt(1.0 - phi * phi)
    levels = np.log([d.mean for d in base.channels[0]])
    shapes = np.array([d.shape for d in base.channels[0]])
    n = config.length
    log_means = np.empty((n, len(levels)))
    log_means[0] = levels + sd * rng.standard_normal(len(levels))
    shocks = innovation_sd * rng.standard_normal((n, len(levels)))
    for t in range(1, n):
        log_means[t] = levels + phi * (log_means[t - 1] - levels) + shocks[t]
    states = _sample_chain(lambda t: base.tpm, base.delta, n, rng)
    means = np.exp(log_means[np.arange(n), states])
    values = rng.gamma(shapes[states], means / shapes[states])
    truth = {"model": base.to_dict(), "parameters": _gamma_truth(base),
             "log_means": log_means, "ar": {"coefficient": phi, "stationary_sd": sd}}
    return ScenarioOutput(ObservationSeries((values,)), [states], truth)


def _appendix_model(config: ScenarioConfig) -> HmmSpec:
    knobs = config.knobs[f"scenario{config.scenario_id}"]
    return three_state_model(knobs["means"], knobs["shapes"], knobs["tpm_diagonal"])


def _scenario_appendix(config: ScenarioConfig, rng: np.random.Generator) -> ScenarioOutput:
    model = _appendix_model(config)
    data, states = simulate(model, [config.length], rng)
    return ScenarioOutput(data, states, {"model": model.to_dict(), "parameters": _gamma_truth(model)})


def generate(config: ScenarioConfig) -> ScenarioOutput:
    """
    按情景生成数据

    参数:
        config: 情景配置
    返回:
        ScenarioOutput（同一种子结果完全相同）
    """
    rng = config.rng()
    scenario = config.scenario_id
    logger.info(f"生成情景{scenario}: T={config.length}, seed={config.seed}, spawn_key={list(config.spawn_key)}")
    if scenario in ("baseline", "8"):
        output = _scenario_baseline(config, rng)
    elif scenario == "1":
        output = _scenario_outliers(config, rng)
    elif scenario == "2":
        output = _scenario_spline(config, rng)
    elif scenario == "3":
        output = _scenario_diel(config, rng)
    elif scenario == "4":
        output = _scenario_heterogeneity(config, rng)
    elif scenario == "5":
        output = _scenario_dwell(config, rng)
    elif scenario == "6":
        output = _scenario_second_order(config, rng)
    elif scenario == "7":
        output = _scenario_autocorrelated(config, rng)
    else:
        output = _scenario_appendix(config, rng)
    output.truth["scenario_id"] = scenario
    output.truth["n_states"] = true_n_states(scenario)
    return output


def true_parameters(config: ScenarioConfig) -> Dict[str, float]:
    """
    情景的真实参数（与generate输出的truth["parameters"]相同），不做模拟
    """
    scenario = config.scenario_id
    if scenario == "2":
        return _spline_truth(_baseline(config.knobs), _spline(config.knobs))
    if scenario in ("9", "10"):
        return _gamma_truth(_appendix_model(config))
    return _gamma_truth(_baseline(config.knobs))


def true_n_states(scenario_id: str) -> int:
    """情景生成过程的真实状态数（情景9、10为3）"""
    return 3 if str(scenario_id) in ("9", "10") else 2
