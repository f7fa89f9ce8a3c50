#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
HMM模型模块
模型表示与核心算法：平稳分布、缩放前向对数似然、Viterbi解码、
完全数据对数似然、模拟以及一步预测分布函数

API中的状态编号从0开始；写出文件时转换为从1开始
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy.sparse.csgraph import connected_components

from common import hmm_kernels
from common.distribution_factory import get_distribution
from common.distributions import Distribution
from common.errors import DataError, InvalidParameterError, MissingObservationError, ReducibleChainError

# 设置日志
logger = logging.getLogger(__name__)

STATIONARY = "stationary"

# 状态序列：每条轨迹一个整数数组
StateSequence = List[np.ndarray]


def stationary_distribution(tpm: np.ndarray, check: bool = True) -> np.ndarray:
    """
    计算平稳分布 δΓ = δ

    参数:
        tpm: 转移概率矩阵
        check: 是否检查不可约性（不可约时平稳分布唯一）
    返回:
        平稳分布向量
    """
    tpm = np.asarray(tpm, dtype=float)
    n = tpm.shape[0]
    if check and n > 1:
        n_components, _ = connected_components(tpm > 0, directed=True, connection="strong")
        if n_components != 1:
            raise ReducibleChainError(f"转移矩阵可约（{n_components}个强连通分量），平稳分布不唯一")
    # δ(I − Γ + U) = 1
    system = np.eye(n) - tpm + np.ones((n, n))
    try:
        delta = np.linalg.solve(system.T, np.ones(n))
    except np.linalg.LinAlgError as e:
        raise ReducibleChainError(f"无法求解平稳分布: {e}") from e
    delta = np.clip(delta, 0.0, None)
    return delta / delta.sum()


@dataclass(frozen=True, eq=False)
class HmmSpec:
    """
    HMM定义

    参数:
        tpm: N×N转移概率矩阵
        channels: 每个观测通道一个长度为N的分布列表
        init: "stationary"或固定的初始分布向量
    """

    tpm: np.ndarray
    channels: Tuple[Tuple[Distribution, ...], ...]
    init: Union[str, np.ndarray] = STATIONARY
    _delta: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        tpm = np.array(self.tpm, dtype=float, ndmin=2)
        n = tpm.shape[0]
        if tpm.shape != (n, n) or n < 1:
            raise InvalidParameterError(f"转移矩阵必须为方阵，当前形状{tpm.shape}")
        if np.any(~np.isfinite(tpm)) or np.any(tpm < 0):
            raise InvalidParameterError("转移矩阵元素必须为非负有限值")
        if np.any(np.abs(tpm.sum(axis=1) - 1.0) > 1e-10):
            raise InvalidParameterError(f"转移矩阵每行之和必须为1: {tpm.sum(axis=1)}")
        channels = tuple(tuple(c) for c in self.channels)
        if not channels:
            raise InvalidParameterError("至少需要一个观测通道")
        for index, channel in enumerate(channels):
            if len(channel) != n:
                raise InvalidParameterError(f"通道{index}应有{n}个状态分布，当前{len(channel)}个")
        if isinstance(self.init, str):
            if self.init != STATIONARY:
                raise InvalidParameterError(f"未知的初始分布模式: {self.init}")
            delta = stationary_distribution(tpm)
            init: Union[str, np.ndarray] = STATIONARY
        else:
            delta = np.asarray(self.init, dtype=float)
            if delta.shape != (n,) or np.any(delta < 0) or abs(delta.sum() - 1.0) > 1e-10:
                raise InvalidParameterError(f"初始分布不合法: {delta}")
            delta.setflags(write=False)
            init = delta
        tpm.setflags(write=False)
        delta = np.array(delta)
        delta.setflags(write=False)
        object.__setattr__(self, "tpm", tpm)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "init", init)
        object.__setattr__(self, "_delta", delta)

    @property
    def n_states(self) -> int:
        return self.tpm.shape[0]

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def is_stationary(self) -> bool:
        return isinstance(self.init, str)

    @property
    def delta(self) -> np.ndarray:
        """初始分布（平稳模式下为Γ的平稳分布）"""
        return self._delta

    def permute(self, order: Sequence[int]) -> "HmmSpec":
        """
        按给定顺序重新标记状态

        参数:
            order: 新状态i对应的旧状态编号order[i]
        """
        order = np.asarray(order, dtype=int)
        tpm = self.tpm[np.ix_(order, order)]
        channels = tuple(tuple(channel[i] for i in order) for channel in self.channels)
        init = STATIONARY if self.is_stationary else self.delta[order]
        return HmmSpec(tpm, channels, init)

    def canonical_order(self) -> "HmmSpec":
        """按第一个通道的均值参数升序排列状态（消除标签交换）"""
        keys = [d.order_key() for d in self.channels[0]]
        return self.permute(np.argsort(keys, kind="stable"))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_states": self.n_states,
            "tpm": self.tpm.tolist(),
            "init": STATIONARY if self.is_stationary else self.delta.tolist(),
            "channels": [[d.to_dict() for d in channel] for channel in self.channels],
        }

    @classmethod
    def from_dict(cls, spec: Dict[str, Any]) -> "HmmSpec":
        init = spec.get("init", STATIONARY)
        channels = tuple(tuple(get_distribution(d) for d in channel) for channel in spec["channels"])
        return cls(np.asarray(spec["tpm"], dtype=float), channels,
                   init if isinstance(init, str) else np.asarray(init, dtype=float))


@dataclass(frozen=True, eq=False)
class ObservationSeries:
    """
    观测序列：一条或多条轨迹，每条为T_k×C的数组，NaN表示缺失

    参数:
        tracks: 轨迹数组
        time_labels: 可选的逐时刻整数协变量（例如一天内的时段编号）
    """

    tracks: Tuple[np.ndarray, ...]
    time_labels: Optional[Tuple[np.ndarray, ...]] = None

    def __post_init__(self):
        tracks = []
        for index, track in enumerate(self.tracks):
            arr = np.array(track, dtype=float)
            if arr.ndim == 1:
                arr = arr[:, None]
            if arr.ndim != 2:
                raise DataError(f"轨迹{index}必须为一维或二维数组")
            if arr.shape[0] < 2:
                raise DataError(f"轨迹{index}长度为{arr.shape[0]}，至少需要2个时刻")
            arr.setflags(write=False)
            tracks.append(arr)
        if not tracks:
            raise DataError("观测序列至少需要一条轨迹")
        if len({t.shape[1] for t in tracks}) != 1:
            raise DataError("所有轨迹的通道数必须一致")
        labels = None
        if self.time_labels is not None:
            labels = tuple(np.asarray(lab, dtype=np.int64) for lab in self.time_labels)
            if len(labels) != len(tracks) or any(len(lab) != len(t) for lab, t in zip(labels, tracks)):
                raise DataError("时间标签长度必须与轨迹一致")
        object.__setattr__(self, "tracks", tuple(tracks))
        object.__setattr__(self, "time_labels", labels)

    @classmethod
    def single(cls, values: Sequence[float]) -> "ObservationSeries":
        """由单通道单轨迹构造"""
        return cls((np.asarray(values, dtype=float),))

    @property
    def n_tracks(self) -> int:
        return len(self.tracks)

    @property
    def n_channels(self) -> int:
        return self.tracks[0].shape[1]

    @property
    def lengths(self) -> List[int]:
        return [t.shape[0] for t in self.tracks]

    def n_observed_slots(self) -> int:
        """至少一个通道有观测的时刻数，跨轨迹求和（信息准则中的T）"""
        return int(sum(np.sum(np.any(~np.isnan(t), axis=1)) for t in self.tracks))

    def channel_values(self, channel: int) -> np.ndarray:
        """某通道所有非缺失观测（跨轨迹拼接）"""
        values = np.concatenate([t[:, channel] for t in self.tracks])
        return values[~np.isnan(values)]


def _check_compatible(model: HmmSpec, data: ObservationSeries) -> None:
    if model.n_channels != data.n_channels:
        raise DataError(f"模型有{model.n_channels}个通道，数据有{data.n_channels}个通道")


def log_emission_matrix(model: HmmSpec, track: np.ndarray) -> np.ndarray:
    """
    单条轨迹的对数发射矩阵

    参数:
        model: HMM
        track: T×C观测数组
    返回:
        T×N矩阵；缺失通道贡献因子1（对数为0）
    """
    n_steps = track.shape[0]
    log_b = np.zeros((n_steps, model.n_states))
    for c, channel in enumerate(model.channels):
        x = track[:, c]
        present = ~np.isnan(x)
        if not present.any():
            continue
        xp = x[present]
        with np.errstate(invalid="ignore", divide="ignore"):
            for i, dist in enumerate(channel):
                log_b[present, i] += dist.log_pdf(xp)
    return log_b


def _track_log_likelihood(model: HmmSpec, track: np.ndarray) -> float:
    log_b = log_emission_matrix(model, track)
    return float(hmm_kernels.forward_log_likelihood(model.delta, model.tpm, log_b))


def log_likelihood(model: HmmSpec, data: ObservationSeries) -> float:
    """
    对数似然：各轨迹缩放前向对数似然之和

    参数:
        model: HMM
        data: 观测序列
    返回:
        对数似然，无法计算时为−∞
    """
    _check_compatible(model, data)
    total = 0.0
    for index, track in enumerate(data.tracks):
        if np.all(np.isnan(track)):
            raise DataError(f"轨迹{index}全部缺失")
        total += _track_log_likelihood(model, track)
    return total


def _log_parameters(model: HmmSpec) -> Tuple[np.ndarray, np.ndarray]:
    with np.errstate(divide="ignore"):
        return np.log(model.delta), np.log(model.tpm)


def viterbi(model: HmmSpec, data: ObservationSeries) -> StateSequence:
    """
    Viterbi解码：每条轨迹联合概率最大的状态序列，相等时取较小编号

    返回:
        每条轨迹一个从0开始的状态数组
    """
    _check_compatible(model, data)
    log_delta, log_tpm = _log_parameters(model)
    states = []
    for track in data.tracks:
        path, _ = hmm_kernels.viterbi_path(log_delta, log_tpm, log_emission_matrix(model, track))
        states.append(path)
    return states


def complete_data_log_likelihood(model: HmmSpec, data: ObservationSeries, states: StateSequence) -> float:
    """
    完全数据对数似然 log p(x, s)

    沿给定序列出现γ=0的转移时返回−∞（不抛异常）
    """
    _check_compatible(model, data)
    if len(states) != data.n_tracks:
        raise DataError("状态序列条数与轨迹数不一致")
    log_delta, log_tpm = _log_parameters(model)
    total = 0.0
    for track, path in zip(data.tracks, states):
        path = np.asarray(path, dtype=np.int64)
        if len(path) != len(track):
            raise DataError("状态序列长度与轨迹长度不一致")
        if np.any(path < 0) or np.any(path >= model.n_states):
            raise DataError("状态编号超出范围")
        log_b = log_emission_matrix(model, track)
        total += log_delta[path[0]]
        total += float(np.sum(log_tpm[path[:-1], path[1:]]))
        total += float(np.sum(log_b[np.arange(len(path)), path]))
    return total


def simulate(model: HmmSpec, lengths: Sequence[int],
             rng: np.random.Generator) -> Tuple[ObservationSeries, StateSequence]:
    """
    从HMM模拟数据

    参数:
        model: HMM
        lengths: 每条轨迹的长度
        rng: 随机流
    返回:
        (观测序列, 真实状态序列)
    """
    cum_delta = np.cumsum(model.delta)
    cum_tpm = np.cumsum(model.tpm, axis=1)
    tracks, all_states = [], []
    for length in lengths:
        states = hmm_kernels.sample_markov_chain(cum_delta, cum_tpm, rng.random(int(length)))
        tracks.append(sample_emissions(model.channels, states, rng))
        all_states.append(states)
    return ObservationSeries(tuple(tracks)), all_states


def sample_emissions(channels: Sequence[Sequence[Distribution]], states: np.ndarray,
                     rng: np.random.Generator) -> np.ndarray:
    """给定状态序列，按通道条件独立地抽取观测"""
    values = np.empty((len(states), len(channels)))
    for c, channel in enumerate(channels):
        for i, dist in enumerate(channel):
            mask = states == i
            count = int(mask.sum())
            if count:
                values[mask, c] = dist.sample(rng, count)
    return values


def forecast_cdf(model: HmmSpec, data: ObservationSeries,
                 channel: int) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    一步预测分布函数在各观测处的取值

    返回:
        每条轨迹一个(F(x_t), F(x_t−))元组；缺失处为NaN
    """
    _check_compatible(model, data)
    dists = model.channels[channel]
    results = []
    for track in data.tracks:
        weights = hmm_kernels.predictive_weights(model.delta, model.tpm, log_emission_matrix(model, track))
        x = track[:, channel]
        present = ~np.isnan(x)
        upper = np.full(len(x), np.nan)
        lower = np.full(len(x), np.nan)
        xp = x[present]
        wp = weights[present]
        state_cdf = np.column_stack([np.asarray(d.cdf(xp), dtype=float) for d in dists])
        state_mass = np.column_stack([np.asarray(d.point_mass(xp), dtype=float) for d in dists])
        upper[present] = np.sum(wp * state_cdf, axis=1)
        lower[present] = np.sum(wp * (state_cdf - state_mass), axis=1)
        results.append((upper, lower))
    return results


def one_step_cdf(model: HmmSpec, data: ObservationSeries, track: int, t: int, channel: int) -> float:
    """
    P(X_t <= x_t | x_1..x_{t−1})：以一步预测状态概率加权的各状态分布函数

    参数:
        track: 轨迹编号
        t: 时刻（从0开始）
        channel: 通道编号
    """
    _check_compatible(model, data)
    values = data.tracks[track]
    x = values[t, channel]
    if np.isnan(x):
        raise MissingObservationError(f"轨迹{track}时刻{t}通道{channel}的观测缺失")
    log_b = log_emission_matrix(model, values[: t + 1])
    weights = hmm_kernels.predictive_weights(model.delta, model.tpm, log_b)[t]
    return float(sum(w * float(d.cdf(x)) for w, d in zip(weights, model.channels[channel])))


def state_occupancy(states: StateSequence, n_states: int) -> np.ndarray:
    """解码状态的占用比例，和为1"""
    counts = np.bincount(np.concatenate([np.asarray(s, dtype=np.int64) for s in states]), minlength=n_states)
    return counts / counts.sum()


def weighted_density_curves(model: HmmSpec, states: StateSequence, channel: int,
                            grid: Sequence[float]) -> pd.DataFrame:
    """
    按解码占用比例加权的各状态密度曲线及其总和

    返回:
        列为x、state_1..state_N、total的表
    """
    grid = np.asarray(grid, dtype=float)
    occupancy = state_occupancy(states, model.n_states)
    table = {"x": grid}
    total = np.zeros_like(grid)
    for i, dist in enumerate(model.channels[channel]):
        curve = occupancy[i] * np.asarray(dist.pdf(grid), dtype=float)
        table[f"state_{i + 1}"] = curve
        total += curve
    table["total"] = total
    return pd.DataFrame(table)
