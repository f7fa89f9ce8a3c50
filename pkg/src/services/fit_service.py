#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
拟合服务模块
多起点数值极大似然估计

每个起点的随机流由SeedSequence(主种子, spawn_key + (起点编号,))派生，
结果与调度顺序无关
"""

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from astropy.stats import circmean

from common.distributions import Gamma, GammaMixture, VonMises, ZeroInflatedGamma, wrap_angle
from common.errors import ConfigError, DataError, FitFailedError, InvalidParameterError
from common.hmm_model import HmmSpec, ObservationSeries, log_likelihood
from common.working_params import count_parameters, from_working, working_bounds
from src.config.settings import FIT_CONFIG, PARAMETER_BOUNDS, START_SAMPLER
from src.services.fit_worker import StartRecord, run_tasks

# 设置日志
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitConfig:
    """
    拟合配置

    参数:
        n_starts: 随机起点个数
        seed: 主种子
        max_iterations: 每个起点的最大迭代次数
        convergence_tolerance: 对数似然相对变化阈值
        parameter_bounds: 自然尺度箱约束
        start_sampler: 起点抽样设置
        gradient: 有限差分方式（"2-point"或"3-point"）
        include_template_start: 是否把模板本身作为第一个起点
        workers: 起点并行的进程数
        spawn_key: 派生随机流时主种子之后的前缀编号
    """

    n_starts: int = FIT_CONFIG['n_starts']
    seed: int = FIT_CONFIG['seed']
    max_iterations: int = FIT_CONFIG['max_iterations']
    convergence_tolerance: float = FIT_CONFIG['convergence_tolerance']
    parameter_bounds: Dict[str, Tuple[float, float]] = field(default_factory=lambda: dict(PARAMETER_BOUNDS))
    start_sampler: Dict[str, Any] = field(default_factory=lambda: dict(START_SAMPLER))
    gradient: str = FIT_CONFIG['gradient']
    include_template_start: bool = FIT_CONFIG['include_template_start']
    workers: int = FIT_CONFIG['workers']
    spawn_key: Tuple[int, ...] = ()

    def __post_init__(self):
        if int(self.n_starts) < 1:
            raise ConfigError(f"起点个数必须至少为1，当前为{self.n_starts}")
        if not self.convergence_tolerance > 0:
            raise ConfigError(f"收敛阈值必须为正，当前为{self.convergence_tolerance}")
        if int(self.max_iterations) < 1:
            raise ConfigError(f"最大迭代次数必须至少为1，当前为{self.max_iterations}")
        if self.gradient not in ("2-point", "3-point"):
            raise ConfigError(f"未知的梯度方式: {self.gradient}")

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]] = None) -> "FitConfig":
        data = dict(data or {})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"未知的拟合配置项: {sorted(unknown)}")
        bounds = dict(PARAMETER_BOUNDS)
        bounds.update({k: tuple(v) for k, v in data.pop("parameter_bounds", {}).items()})
        sampler = dict(START_SAMPLER)
        sampler.update(data.pop("start_sampler", {}))
        if "spawn_key" in data:
            data["spawn_key"] = tuple(int(k) for k in data["spawn_key"])
        return cls(parameter_bounds=bounds, start_sampler=sampler, **data)

    def with_key(self, *key: int) -> "FitConfig":
        """派生子配置：在spawn_key后追加编号"""
        return replace(self, spawn_key=tuple(self.spawn_key) + tuple(int(k) for k in key))


@dataclass
class FitResult:
    """
    拟合结果

    参数:
        best_model: 按第一通道均值排序后的最优模型
        log_lik: 最大对数似然
        n_params: 参数个数p
        starts: 各起点诊断记录
        data_size: 非缺失观测时刻数T
        boundary_fallback: 所有收敛起点都落在边界上、只能退而取之
    """

    best_model: HmmSpec
    log_lik: float
    n_params: int
    starts: List[StartRecord]
    data_size: int
    boundary_fallback: bool = False

    @property
    def n_states(self) -> int:
        return self.best_model.n_states

    @property
    def n_converged(self) -> int:
        return sum(1 for s in self.starts if s.converged)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_states": self.n_states,
            "log_lik": self.log_lik,
            "n_params": self.n_params,
            "data_size": self.data_size,
            "boundary_fallback": self.boundary_fallback,
            "best_model": self.best_model.to_dict(),
            "starts": [s.to_dict() for s in self.starts],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FitResult":
        return cls(
            best_model=HmmSpec.from_dict(data["best_model"]),
            log_lik=float(data["log_lik"]),
            n_params=int(data["n_params"]),
            starts=[StartRecord.from_dict(s) for s in data.get("starts", [])],
            data_size=int(data["data_size"]),
            boundary_fallback=bool(data.get("boundary_fallback", False)),
        )


def start_rng(config: FitConfig, index: int) -> np.random.Generator:
    """第index个起点的随机流"""
    sequence = np.random.SeedSequence(entropy=int(config.seed), spawn_key=tuple(config.spawn_key) + (index,))
    return np.random.default_rng(sequence)


def _log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))


def _clip_mean(value: float, lo: float, hi: float) -> float:
    return float(min(max(value, lo * 1.01), hi / 1.01))


def sample_start(template: HmmSpec, data: ObservationSeries, rng: np.random.Generator,
                 sampler: Dict[str, Any], bounds: Dict[str, Tuple[float, float]]) -> HmmSpec:
    """
    抽取一个随机起点

    均值取数据等距概率分位数并乘性扰动，形状参数对数均匀，
    转移矩阵对角元均匀抽取、其余均分
    """
    n = template.n_states
    lo_diag, hi_diag = sampler['tpm_diagonal_range']
    tpm = np.empty((n, n))
    for i in range(n):
        if n == 1:
            tpm[i, i] = 1.0
            continue
        diagonal = rng.uniform(lo_diag, hi_diag)
        tpm[i, :] = (1.0 - diagonal) / (n - 1)
        tpm[i, i] = diagonal

    jitter = sampler['mean_jitter']
    shape_lo, shape_hi = sampler['shape_range']
    mean_lo, mean_factor = bounds['mean']
    probs = (np.arange(n) + 0.5) / n

    channels = []
    for c, channel in enumerate(template.channels):
        values = data.channel_values(c)
        if len(values) == 0:
            raise DataError(f"通道{c}没有观测，无法抽取起点")
        positive = values[values > 0]
        if len(positive) == 0:
            positive = np.abs(values) + 1e-3
        mean_hi = mean_factor * float(np.max(np.abs(values)))
        quantiles = np.sort(np.quantile(positive, probs) * rng.uniform(1 - jitter, 1 + jitter, size=n))
        dists = []
        for i, dist in enumerate(channel):
            if isinstance(dist, Gamma):
                dists.append(Gamma(_clip_mean(quantiles[i], mean_lo, mean_hi),
                                   _log_uniform(rng, shape_lo, shape_hi)))
            elif isinstance(dist, ZeroInflatedGamma):
                zero_share = max(float(np.mean(values == 0)), sampler['zero_mass_floor'])
                zero_mass = min(max(zero_share * rng.uniform(1 - jitter, 1 + jitter), 1e-6), 0.5)
                dists.append(ZeroInflatedGamma(zero_mass, _clip_mean(quantiles[i], mean_lo, mean_hi),
                                               _log_uniform(rng, shape_lo, shape_hi)))
            elif isinstance(dist, VonMises):
                centre = float(circmean(values))
                spread = sampler['location_jitter']
                location = float(wrap_angle(centre + rng.uniform(-spread, spread)))
                dists.append(VonMises(location, _log_uniform(rng, *sampler['concentration_range'])))
            elif isinstance(dist, GammaMixture):
                k = len(dist.components)
                spread = np.sort(np.exp(rng.uniform(-0.5, 0.5, size=k)))
                components = tuple(Gamma(_clip_mean(quantiles[i] * s, mean_lo, mean_hi),
                                         _log_uniform(rng, shape_lo, shape_hi)) for s in spread)
                dists.append(GammaMixture(tuple([1.0 / k] * k), components))
            else:
                raise InvalidParameterError(f"{dist.family}分布不能作为估计的发射分布")
        channels.append(tuple(dists))

    init = template.init if template.is_stationary else template.delta
    return HmmSpec(tpm, tuple(channels), init)


def fit(data: ObservationSeries, template: HmmSpec, config: Optional[FitConfig] = None) -> FitResult:
    """
    多起点数值极大似然拟合

    参数:
        data: 观测序列
        template: 决定状态数与各通道分布族的模板
        config: 拟合配置
    返回:
        FitResult（模型按第一通道均值升序排列）
    异常:
        FitFailedError: 没有任何起点收敛
    """
    config = config or FitConfig()
    if template.n_channels != data.n_channels:
        raise DataError(f"模板有{template.n_channels}个通道，数据有{data.n_channels}个通道")
    n_params = count_parameters(template)
    channel_max = []
    for c in range(data.n_channels):
        values = data.channel_values(c)
        channel_max.append(float(np.max(np.abs(values))) if len(values) else 1.0)
    bounds = working_bounds(template, config.parameter_bounds, channel_max)

    logger.info(f"拟合{template.n_states}状态模型: {config.n_starts}个起点, 参数{n_params}个, "
                f"spawn_key={list(config.spawn_key)}")

    tasks = []
    for index in range(config.n_starts):
        record = StartRecord(index=index, seed_key=list(config.spawn_key) + [index])
        if index == 0 and config.include_template_start:
            start = template
        else:
            start = sample_start(template, data, start_rng(config, index), config.start_sampler,
                                 config.parameter_bounds)
        tasks.append({
            "start": start, "template": template, "data": data, "bounds": bounds,
            "max_iterations": config.max_iterations, "tolerance": config.convergence_tolerance,
            "gradient": config.gradient, "record": record,
        })

    outcomes = run_tasks(tasks, config.workers)
    starts = [record for record, _ in outcomes]

    converged = [(record, x) for record, x in outcomes if record.converged and x is not None]
    if not converged:
        logger.error(f"{template.n_states}状态模型: {config.n_starts}个起点均未收敛")
        raise FitFailedError(f"{template.n_states}状态模型的{config.n_starts}个起点均未收敛", starts)

    interior = [(record, x) for record, x in converged if not record.at_bound]
    boundary_fallback = not interior
    if boundary_fallback:
        logger.warning(f"{template.n_states}状态模型: 所有收敛起点都落在参数边界上，取其中最优者")
        interior = converged
    # 对数似然相同时取编号较小的起点
    best_record, best_x = max(interior, key=lambda item: (item[0].log_lik, -item[0].index))

    best_model = from_working(best_x, template).canonical_order()
    log_lik = log_likelihood(best_model, data)
    logger.info(f"{template.n_states}状态模型: 收敛{len(converged)}/{config.n_starts}, "
                f"最优起点{best_record.index}, 对数似然{log_lik:.4f}")
    return FitResult(best_model=best_model, log_lik=log_lik, n_params=n_params, starts=starts,
                     data_size=data.n_observed_slots(), boundary_fallback=boundary_fallback)


def gamma_template(n_states: int, n_channels: int = 1) -> HmmSpec:
    """伽马HMM模板（参数值只作占位）"""
    return family_template(n_states, ["gamma"] * n_channels)


def family_template(n_states: int, families: Sequence[str], mixture_components: int = 2) -> HmmSpec:
    """
    按通道分布族构造模板

    参数:
        n_states: 状态数
        families: 每个通道的分布族（gamma、zigamma、vonmises、gamma_mixture）
        mixture_components: 混合分布的分量数
    """
    if n_states < 1:
        raise ConfigError(f"状态数必须至少为1，当前为{n_states}")
    tpm = np.full((n_states, n_states), 0.1 / max(n_states - 1, 1))
    np.fill_diagonal(tpm, 0.9 if n_states > 1 else 1.0)
    channels = []
    for family in families:
        if family == "gamma":
            channels.append(tuple(Gamma(1.0 + i, 1.0) for i in range(n_states)))
        elif family == "zigamma":
            channels.append(tuple(ZeroInflatedGamma(0.01, 1.0 + i, 1.0) for i in range(n_states)))
        elif family == "vonmises":
            channels.append(tuple(VonMises(0.0, 1.0) for _ in range(n_states)))
        elif family == "gamma_mixture":
            components = tuple(Gamma(1.0 + m, 1.0) for m in range(mixture_components))
            weights = tuple([1.0 / mixture_components] * mixture_components)
            channels.append(tuple(GammaMixture(weights, components) for _ in range(n_states)))
        else:
            raise ConfigError(f"不支持估计的分布族: {family}")
    return HmmSpec(tpm, tuple(channels))
