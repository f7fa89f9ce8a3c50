#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
模型选择服务模块
AIC / BIC / ICL 信息准则与按状态数的准则表
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from common.errors import ConfigError, HmmLabError
from common.hmm_model import HmmSpec, ObservationSeries, complete_data_log_likelihood, viterbi
from src.services.fit_service import FitConfig, FitResult, fit

# 设置日志
logger = logging.getLogger(__name__)

CRITERIA = ("aic", "bic", "icl")


def aic(log_lik: float, n_params: int) -> float:
    """AIC = −2·log L + 2p"""
    return -2.0 * log_lik + 2.0 * n_params


def bic(log_lik: float, n_params: int, data_size: int) -> float:
    """BIC = −2·log L + p·ln T"""
    if data_size < 1:
        raise ConfigError(f"样本量T必须至少为1，当前为{data_size}")
    return -2.0 * log_lik + n_params * math.log(data_size)


def icl(complete_data_log_lik: float, n_params: int, data_size: int) -> Optional[float]:
    """
    ICL = −2·log L_c(Viterbi序列) + p·ln T

    返回:
        完全数据对数似然为−∞时返回None（ICL无定义）
    """
    if not math.isfinite(complete_data_log_lik):
        return None
    return bic(complete_data_log_lik, n_params, data_size)


@dataclass
class CriteriaRow:
    """
    准则表的一行

    参数:
        n_states: 状态数
        n_params: 参数个数
        log_lik: 最大对数似然
        complete_data_log_lik: Viterbi序列的完全数据对数似然
        aic / bic / icl: 信息准则（icl可能无定义）
        error: 拟合失败时的错误描述
    """

    n_states: int
    n_params: Optional[int] = None
    log_lik: Optional[float] = None
    complete_data_log_lik: Optional[float] = None
    aic: Optional[float] = None
    bic: Optional[float] = None
    icl: Optional[float] = None
    data_size: Optional[int] = None
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


@dataclass
class CriteriaTable:
    """准则表：各状态数的行、各准则的胜者以及对应的拟合结果"""

    rows: List[CriteriaRow]
    winners: Dict[str, Optional[int]]
    fits: Dict[int, FitResult] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        """转换为表格，附带相对行最小值的Δ列与胜者标记"""
        frame = pd.DataFrame([r.to_dict() for r in self.rows])
        for name in CRITERIA:
            values = pd.to_numeric(frame[name], errors="coerce")
            frame[f"delta_{name}"] = values - values.min()
            frame[f"{name}_winner"] = frame["n_states"] == self.winners.get(name)
        return frame


def criteria_row(result: FitResult, data: ObservationSeries) -> CriteriaRow:
    """由拟合结果计算一行准则（ICL使用最优模型的Viterbi序列）"""
    states = viterbi(result.best_model, data)
    complete = complete_data_log_likelihood(result.best_model, data, states)
    return row_from_values(result.n_states, result.n_params, result.log_lik, complete, result.data_size)


def row_from_values(n_states: int, n_params: int, log_lik: float,
                    complete_data_log_lik: float, data_size: int) -> CriteriaRow:
    """由已保存的数值重新计算准则，不需要重新拟合"""
    icl_value = icl(complete_data_log_lik, n_params, data_size)
    if icl_value is None:
        logger.warning(f"{n_states}状态模型: Viterbi序列含零概率转移，ICL无定义")
    return CriteriaRow(
        n_states=n_states, n_params=n_params, log_lik=log_lik,
        complete_data_log_lik=complete_data_log_lik if math.isfinite(complete_data_log_lik) else None,
        aic=aic(log_lik, n_params), bic=bic(log_lik, n_params, data_size), icl=icl_value,
        data_size=data_size,
    )


def select_winners(rows: Sequence[CriteriaRow]) -> Dict[str, Optional[int]]:
    """
    每个准则取最小值对应的状态数；相等时取较小的状态数，无定义或失败的行不参与
    """
    winners: Dict[str, Optional[int]] = {}
    for name in CRITERIA:
        candidates = [(getattr(r, name), r.n_states) for r in rows if r.ok and getattr(r, name) is not None]
        skipped = [r.n_states for r in rows if r.ok and getattr(r, name) is None]
        if skipped:
            logger.warning(f"{name.upper()}在状态数{skipped}处无定义，不参与比较")
        winners[name] = min(candidates)[1] if candidates else None
    return winners


def criteria_table(data: ObservationSeries, template_for: Any, n_range: Sequence[int],
                   config: Optional[FitConfig] = None) -> CriteriaTable:
    """
    对每个状态数拟合模型并计算准则

    参数:
        data: 观测序列
        template_for: 状态数 → 模板HmmSpec 的函数
        n_range: 状态数范围
        config: 拟合配置；各状态数在spawn_key后追加N派生独立随机流
    返回:
        CriteriaTable
    """
    if not n_range:
        raise ConfigError("状态数范围不能为空")
    config = config or FitConfig()
    rows, fits = [], {}
    for n_states in n_range:
        template: HmmSpec = template_for(int(n_states))
        try:
            result = fit(data, template, config.with_key(int(n_states)))
        except HmmLabError as e:
            logger.error(f"{n_states}状态模型拟合失败: {e}")
            rows.append(CriteriaRow(n_states=int(n_states), error=str(e)))
            continue
        fits[int(n_states)] = result
        row = criteria_row(result, data)
        logger.info(f"N={n_states}: logL={row.log_lik:.3f}, AIC={row.aic:.3f}, BIC={row.bic:.3f}, "
                    f"ICL={row.icl if row.icl is None else round(row.icl, 3)}")
        rows.append(row)
    return CriteriaTable(rows=rows, winners=select_winners(rows), fits=fits)
