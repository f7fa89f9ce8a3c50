#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
工作参数变换模块
自然参数与无约束工作参数之间的双射，以及参数计数

向量布局：先是转移矩阵按行的多项logit（参考类别为对角元），
再按通道、按状态依次排列各发射分布的工作参数
"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from common.distributions import Distribution, Gamma, GammaMixture, VonMises, ZeroInflatedGamma, wrap_angle
from common.errors import InvalidParameterError
from common.hmm_model import HmmSpec

# 设置日志
logger = logging.getLogger(__name__)

# 指数变换前的截断，避免溢出
_EXP_CLIP = 700.0

# 工作参数类别，用于设定箱约束与边界标记
KIND_TPM = "tpm"
KIND_MEAN = "mean"
KIND_SHAPE = "shape"
KIND_CONCENTRATION = "concentration"
KIND_LOCATION = "location"
KIND_ZERO_MASS = "zero_mass"
KIND_WEIGHT = "weight"

GUARDED_KINDS = (KIND_MEAN, KIND_SHAPE, KIND_CONCENTRATION)


def _exp(w: float) -> float:
    return math.exp(min(max(w, -_EXP_CLIP), _EXP_CLIP))


def _emission_layout(dist: Distribution) -> List[Tuple[str, str]]:
    """单个发射分布的(参数名, 类别)列表"""
    if isinstance(dist, Gamma):
        return [("mean", KIND_MEAN), ("shape", KIND_SHAPE)]
    if isinstance(dist, VonMises):
        return [("location", KIND_LOCATION), ("concentration", KIND_CONCENTRATION)]
    if isinstance(dist, ZeroInflatedGamma):
        return [("zero_mass", KIND_ZERO_MASS), ("mean", KIND_MEAN), ("shape", KIND_SHAPE)]
    if isinstance(dist, GammaMixture):
        k = len(dist.components)
        return ([(f"mean_{m + 1}", KIND_MEAN) for m in range(k)]
                + [(f"shape_{m + 1}", KIND_SHAPE) for m in range(k)]
                + [(f"weight_{m + 1}", KIND_WEIGHT) for m in range(1, k)])
    raise InvalidParameterError(f"{dist.family}分布不能作为估计的发射分布")


def parameter_layout(template: HmmSpec) -> List[Dict[str, object]]:
    """
    工作参数向量的逐项说明

    返回:
        每项含name、kind、channel、state的字典列表
    """
    layout: List[Dict[str, object]] = []
    n = template.n_states
    for i in range(n):
        for j in range(n):
            if i != j:
                layout.append({"name": f"tpm[{i + 1},{j + 1}]", "kind": KIND_TPM, "channel": None, "state": i})
    for c, channel in enumerate(template.channels):
        for i, dist in enumerate(channel):
            for name, kind in _emission_layout(dist):
                layout.append({"name": f"ch{c}.{name}[{i + 1}]", "kind": kind, "channel": c, "state": i})
    return layout


def count_parameters(template: HmmSpec) -> int:
    """
    模型参数个数 p = N(N−1) + 各通道各状态发射分布的自由参数个数之和
    （平稳初始分布由Γ决定，不计入）
    """
    n = template.n_states
    return n * (n - 1) + sum(d.free_parameter_count() for channel in template.channels for d in channel)


def _logit(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise InvalidParameterError(f"logit变换要求概率位于(0, 1)，当前为{p}")
    return math.log(p) - math.log1p(-p)


def _log(x: float, name: str) -> float:
    if not x > 0 or not np.isfinite(x):
        raise InvalidParameterError(f"{name}必须为正才能取对数，当前为{x}")
    return math.log(x)


def to_working(model: HmmSpec) -> np.ndarray:
    """
    自然参数 → 工作参数

    参数:
        model: HMM
    返回:
        无约束实数向量
    """
    values: List[float] = []
    tpm = model.tpm
    n = model.n_states
    for i in range(n):
        for j in range(n):
            if i != j:
                values.append(_log(tpm[i, j], "转移概率") - _log(tpm[i, i], "转移矩阵对角元"))
    for channel in model.channels:
        for dist in channel:
            if isinstance(dist, Gamma):
                values += [_log(dist.mean, "均值"), _log(dist.shape, "形状参数")]
            elif isinstance(dist, VonMises):
                values += [dist.location, _log(dist.concentration, "集中度")]
            elif isinstance(dist, ZeroInflatedGamma):
                values += [_logit(dist.zero_mass), _log(dist.mean, "均值"), _log(dist.shape, "形状参数")]
            elif isinstance(dist, GammaMixture):
                values += [_log(c.mean, "均值") for c in dist.components]
                values += [_log(c.shape, "形状参数") for c in dist.components]
                w0 = _log(dist.weights[0], "混合权重")
                values += [_log(w, "混合权重") - w0 for w in dist.weights[1:]]
            else:
                raise InvalidParameterError(f"{dist.family}分布不能作为估计的发射分布")
    return np.asarray(values, dtype=float)


def _softmax_row(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits)
    weights = np.exp(shifted)
    return weights / weights.sum()


def from_working(vector: Sequence[float], template: HmmSpec) -> HmmSpec:
    """
    工作参数 → 自然参数

    参数:
        vector: 工作参数向量
        template: 决定状态数、分布族与初始分布模式的模板
    返回:
        HMM
    """
    w = np.asarray(vector, dtype=float)
    expected = len(parameter_layout(template))
    if w.shape != (expected,):
        raise InvalidParameterError(f"工作参数长度应为{expected}，当前为{w.shape}")
    n = template.n_states
    tpm = np.empty((n, n))
    pos = 0
    for i in range(n):
        logits = np.zeros(n)
        for j in range(n):
            if i != j:
                logits[j] = w[pos]
                pos += 1
        tpm[i] = _softmax_row(logits)

    channels = []
    for channel in template.channels:
        dists = []
        for dist in channel:
            if isinstance(dist, Gamma):
                dists.append(Gamma(_exp(w[pos]), _exp(w[pos + 1])))
                pos += 2
            elif isinstance(dist, VonMises):
                dists.append(VonMises(float(wrap_angle(w[pos])), _exp(w[pos + 1])))
                pos += 2
            elif isinstance(dist, ZeroInflatedGamma):
                zero_mass = float(special.expit(w[pos]))
                dists.append(ZeroInflatedGamma(min(zero_mass, 1.0 - 1e-16), _exp(w[pos + 1]), _exp(w[pos + 2])))
                pos += 3
            elif isinstance(dist, GammaMixture):
                k = len(dist.components)
                means = [_exp(v) for v in w[pos: pos + k]]
                shapes = [_exp(v) for v in w[pos + k: pos + 2 * k]]
                weights = _softmax_row(np.concatenate([[0.0], w[pos + 2 * k: pos + 3 * k - 1]]))
                pos += 3 * k - 1
                components = tuple(Gamma(m, s) for m, s in zip(means, shapes))
                dists.append(GammaMixture(tuple(float(x) for x in weights), components))
            else:
                raise InvalidParameterError(f"{dist.family}分布不能作为估计的发射分布")
        channels.append(tuple(dists))

    init = template.init if template.is_stationary else template.delta
    return HmmSpec(tpm, tuple(channels), init)


def working_bounds(template: HmmSpec, boxes: Dict[str, Tuple[float, float]],
                   channel_max: Sequence[float]) -> List[Tuple[Optional[float], Optional[float]]]:
    """
    工作尺度上的箱约束

    参数:
        template: 模板
        boxes: 自然尺度上的箱约束，键为参数类别；均值上界为"数据最大值的倍数"
        channel_max: 各通道观测的最大值
    返回:
        L-BFGS-B使用的(下界, 上界)列表
    """
    bounds: List[Tuple[Optional[float], Optional[float]]] = []
    for entry in parameter_layout(template):
        kind = entry["kind"]
        if kind == KIND_MEAN:
            lo, factor = boxes[KIND_MEAN]
            hi = max(factor * float(channel_max[entry["channel"]]), lo * 10.0)
            bounds.append((math.log(lo), math.log(hi)))
        elif kind in (KIND_SHAPE, KIND_CONCENTRATION):
            lo, hi = boxes[kind]
            bounds.append((math.log(lo), math.log(hi)))
        elif kind in (KIND_ZERO_MASS, KIND_WEIGHT, KIND_TPM):
            limit = boxes.get("logit", (None, None))
            bounds.append(tuple(limit))
        else:
            bounds.append((None, None))
    return bounds


def flag_at_bound(vector: Sequence[float], template: HmmSpec,
                  bounds: Sequence[Tuple[Optional[float], Optional[float]]],
                  tolerance: float = 1e-6) -> List[str]:
    """
    返回收敛点处落在箱边界上的受保护参数名
    """
    flagged = []
    for value, entry, (lo, hi) in zip(vector, parameter_layout(template), bounds):
        if entry["kind"] not in GUARDED_KINDS:
            continue
        scale = tolerance * max(1.0, abs(value))
        if (lo is not None and value - lo <= scale) or (hi is not None and hi - value <= scale):
            flagged.append(str(entry["name"]))
    return flagged
