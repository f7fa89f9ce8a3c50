#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
诊断服务模块
一步预测伪残差、残差自相关与QQ点，以及基于模拟的模型检验
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy import stats
from statsmodels.tsa.stattools import acf as sm_acf

from common.errors import DataError
from common.hmm_model import HmmSpec, ObservationSeries, forecast_cdf, simulate
from src.config.settings import DIAGNOSTICS_CONFIG

# 设置日志
logger = logging.getLogger(__name__)


@dataclass
class ResidualSeries:
    """
    伪残差序列

    参数:
        tracks: 每条轨迹一个数组，观测缺失处为NaN
        n_clamped: 分布函数值被截断到[ε, 1−ε]的个数
    """

    tracks: List[np.ndarray]
    n_clamped: int = 0

    def values(self) -> np.ndarray:
        """所有非缺失残差"""
        pooled = np.concatenate(self.tracks)
        return pooled[~np.isnan(pooled)]


def pseudo_residuals(model: HmmSpec, data: ObservationSeries, channel: int,
                     rng: Optional[np.random.Generator] = None,
                     clamp: float = DIAGNOSTICS_CONFIG['clamp']) -> ResidualSeries:
    """
    一步预测伪残差 z_t = Φ⁻¹(F(x_t | x_1..x_{t−1}))

    观测处有点质量（如零膨胀的零）时在[F(x−), F(x)]上均匀随机化

    参数:
        model: 拟合的模型
        data: 观测序列
        channel: 通道编号
        rng: 随机化所用的随机流
        clamp: 分布函数值的截断界
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    residuals, n_clamped = [], 0
    for upper, lower in forecast_cdf(model, data, channel):
        u = upper.copy()
        present = ~np.isnan(u)
        atoms = present & (upper - lower > 0)
        if atoms.any():
            u[atoms] = rng.uniform(lower[atoms], upper[atoms])
        outside = present & ((u < clamp) | (u > 1.0 - clamp))
        n_clamped += int(outside.sum())
        u[present] = np.clip(u[present], clamp, 1.0 - clamp)
        residuals.append(stats.norm.ppf(u))
    if n_clamped:
        logger.warning(f"通道{channel}: {n_clamped}个分布函数值被截断到[{clamp}, {1 - clamp}]")
    return ResidualSeries(residuals, n_clamped)


def acf(z: ResidualSeries, max_lag: int) -> np.ndarray:
    """
    合并各轨迹的样本自相关函数，缺失值按对跳过

    轨迹之间插入max_lag个缺失值，使跨轨迹的配对不参与计算
    """
    lengths = [len(t) for t in z.tracks]
    if max_lag >= min(lengths):
        raise DataError(f"最大滞后{max_lag}必须小于最短轨迹长度{min(lengths)}")
    if z.values().size == 0:
        raise DataError("残差全部缺失，无法计算自相关")
    gap = np.full(max_lag, np.nan)
    pieces = []
    for index, track in enumerate(z.tracks):
        if index:
            pieces.append(gap)
        pieces.append(track)
    pooled = np.concatenate(pieces)
    return np.asarray(sm_acf(pooled, nlags=max_lag, missing="conservative", fft=False))


def acf_table(z: ResidualSeries, max_lag: int) -> pd.DataFrame:
    """自相关的绘图数据（含白噪声带）"""
    values = acf(z, max_lag)
    band = 3.0 / np.sqrt(z.values().size)
    return pd.DataFrame({"lag": np.arange(len(values)), "acf": values, "band": band})


def qq_points(z: ResidualSeries) -> pd.DataFrame:
    """
    正态QQ点，绘图位置(i − 0.5)/n

    返回:
        列为theoretical、sample的表，按升序排列
    """
    values = np.sort(z.values())
    n = values.size
    if n < 2:
        raise DataError(f"QQ图至少需要2个残差，当前{n}个")
    theoretical = stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
    return pd.DataFrame({"theoretical": theoretical, "sample": values})


def ks_normality(z: ResidualSeries) -> Tuple[float, float]:
    """残差与标准正态的KS检验 (统计量, p值)"""
    result = stats.kstest(z.values(), "norm")
    return float(result.statistic), float(result.pvalue)


def _summary_statistics(data: ObservationSeries, channel: int) -> dict:
    values = data.channel_values(channel)
    lag1 = []
    for track in data.tracks:
        x = track[:, channel]
        pair = ~np.isnan(x[:-1]) & ~np.isnan(x[1:])
        if pair.sum() > 2:
            lag1.append(np.corrcoef(x[:-1][pair], x[1:][pair])[0, 1])
    q05, q50, q95 = np.quantile(values, [0.05, 0.5, 0.95])
    return {
        "mean": float(np.mean(values)),
        "sd": float(np.std(values, ddof=1)),
        "q05": float(q05),
        "median": float(q50),
        "q95": float(q95),
        "zero_share": float(np.mean(values == 0)),
        "lag1_autocorrelation": float(np.nanmean(lag1)) if lag1 else float("nan"),
    }


def simulation_check(model: HmmSpec, data: ObservationSeries, channel: int, rng: np.random.Generator,
                     n_sims: int = DIAGNOSTICS_CONFIG['simulation_check_runs']) -> pd.DataFrame:
    """
    基于模拟的模型检验

    从拟合模型按相同轨迹长度模拟n_sims组数据，比较观测数据与模拟数据的汇总统计量

    返回:
        每个统计量一行：observed、sim_mean、sim_q05、sim_q95、tail_probability（双侧经验尾概率）
    """
    observed = _summary_statistics(data, channel)
    simulated = []
    for _ in range(n_sims):
        sim, _ = simulate(model, data.lengths, rng)
        simulated.append(_summary_statistics(sim, channel))
    sims = pd.DataFrame(simulated)
    rows = []
    for name, value in observed.items():
        column = sims[name].to_numpy()
        column = column[~np.isnan(column)]
        if column.size == 0 or np.isnan(value):
            tail = float("nan")
        else:
            tail = min(1.0, 2.0 * min(np.mean(column <= value), np.mean(column >= value)))
        rows.append({
            "statistic": name,
            "observed": value,
            "sim_mean": float(np.mean(column)) if column.size else float("nan"),
            "sim_q05": float(np.quantile(column, 0.05)) if column.size else float("nan"),
            "sim_q95": float(np.quantile(column, 0.95)) if column.size else float("nan"),
            "tail_probability": tail,
        })
    logger.info(f"模拟检验完成: {n_sims}组模拟数据")
    return pd.DataFrame(rows)
