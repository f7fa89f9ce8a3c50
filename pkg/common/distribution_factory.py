#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
分布工厂模块
根据声明式字典创建分布实例，供配置文件、结果反序列化与情景定义使用
"""

import logging
from pathlib import Path
from typing import Any, Dict

from common.distributions import (Distribution, Gamma, GammaMixture, LogNormal, PoissonDwell,
                                  SplineDensity, Uniform, VonMises, ZeroInflatedGamma)
from common.errors import InvalidParameterError

# 设置日志
logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
SCENARIO2_SPLINE_TABLE = DATA_DIR / "scenario2_spline_density.txt"


def get_distribution(spec: Dict[str, Any]) -> Distribution:
    """
    根据字典创建分布实例

    参数:
        spec: 含"family"键的字典，例如{"family": "gamma", "mean": 0.5, "shape": 0.7}；
              样条密度可用{"family": "spline", "table": 路径}从文本表读取
    返回:
        分布实例
    """
    if "family" not in spec:
        raise InvalidParameterError(f"分布定义缺少family字段: {spec}")
    family = str(spec["family"]).lower()

    try:
        if family == "gamma":
            return Gamma(float(spec["mean"]), float(spec["shape"]))
        elif family == "vonmises":
            return VonMises(float(spec.get("location", 0.0)), float(spec["concentration"]))
        elif family == "zigamma":
            return ZeroInflatedGamma(float(spec["zero_mass"]), float(spec["mean"]), float(spec["shape"]))
        elif family == "gamma_mixture":
            components = tuple(get_distribution({"family": "gamma", **c}) for c in spec["components"])
            return GammaMixture(tuple(float(w) for w in spec["weights"]), components)
        elif family == "spline":
            if "table" in spec:
                table = Path(spec["table"])
                if not table.is_absolute() and not table.exists():
                    table = DATA_DIR / table
                return SplineDensity.from_table(table)
            return SplineDensity(tuple(spec["knots"]), tuple(spec["coefficients"]))
        elif family == "lognormal":
            return LogNormal(float(spec["log_mean"]), float(spec["log_sd"]))
        elif family == "poisson_dwell":
            return PoissonDwell(float(spec["mean"]), str(spec.get("mode", "shift")))
        elif family == "uniform":
            return Uniform(float(spec["lo"]), float(spec["hi"]))
    except KeyError as e:
        raise InvalidParameterError(f"{family}分布缺少参数: {e}") from e

    logger.error(f"未知分布类型 '{family}'")
    raise InvalidParameterError(f"未知分布类型: {family}")


def scenario2_spline() -> SplineDensity:
    """情景2冻结的重尾样条密度"""
    return SplineDensity.from_table(SCENARIO2_SPLINE_TABLE)
