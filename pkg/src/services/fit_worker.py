#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
拟合工作进程模块
单个起点的局部优化，以及按起点并行的进程池
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from common.errors import HmmLabError
from common.hmm_model import HmmSpec, ObservationSeries, log_likelihood
from common.working_params import flag_at_bound, from_working, to_working
from src.utils.log_config import current_settings, worker_initializer

# 设置日志
logger = logging.getLogger(__name__)

# 目标函数无法计算时返回的罚值
PENALTY = 1e15


@dataclass
class StartRecord:
    """
    单个起点的诊断记录

    参数:
        index: 起点编号
        seed_key: 派生随机流的spawn key（主种子之后的各级编号）
        converged: 是否收敛
        log_lik: 收敛点的对数似然（丢弃时为None）
        iterations: 优化迭代次数
        at_bound: 收敛时落在箱边界上的参数名
        message: 优化器或异常信息
    """

    index: int
    seed_key: List[int]
    converged: bool = False
    log_lik: Optional[float] = None
    iterations: int = 0
    at_bound: List[str] = field(default_factory=list)
    message: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StartRecord":
        return cls(**data)


class NegativeLogLikelihood:
    """优化目标：工作参数上的负对数似然"""

    def __init__(self, template: HmmSpec, data: ObservationSeries):
        self.template = template
        self.data = data

    def __call__(self, working: np.ndarray) -> float:
        try:
            model = from_working(working, self.template)
            value = log_likelihood(model, self.data)
        except (HmmLabError, FloatingPointError, ValueError):
            return PENALTY
        if not math.isfinite(value):
            return PENALTY
        return -value


def _relative_change(old: float, new: float) -> float:
    return (old - new) / max(abs(old), abs(new), 1.0)


def optimize_start(start: HmmSpec, template: HmmSpec, data: ObservationSeries,
                   bounds: Sequence[Tuple[Optional[float], Optional[float]]],
                   max_iterations: int, tolerance: float, gradient: str,
                   record: StartRecord) -> Tuple[StartRecord, Optional[np.ndarray]]:
    """
    从给定起点做一次局部优化

    参数:
        start: 起点模型
        template: 模板
        data: 观测序列
        bounds: 工作尺度箱约束
        max_iterations: 最大迭代次数
        tolerance: 对数似然相对变化收敛阈值
        gradient: 有限差分方式
        record: 待填写的诊断记录
    返回:
        (诊断记录, 收敛点工作参数或None)
    """
    objective = NegativeLogLikelihood(template, data)
    try:
        x0 = to_working(start)
    except HmmLabError as e:
        record.message = f"起点参数无效: {e}"
        return record, None
    x0 = np.array([min(max(v, lo if lo is not None else v), hi if hi is not None else v)
                   for v, (lo, hi) in zip(x0, bounds)])
    initial = objective(x0)
    if initial >= PENALTY:
        record.message = "起点处似然不可计算，已丢弃"
        logger.warning(f"起点{record.index}: {record.message}")
        return record, None

    options = {"maxiter": max_iterations, "ftol": tolerance}
    result = minimize(objective, x0, method="L-BFGS-B", jac=gradient, bounds=bounds, options=options)
    iterations = int(result.nit)
    converged = bool(result.success)
    best_x, best_f = result.x, float(result.fun)

    # 线搜索异常终止：从终点重新启动一次，改进低于阈值即视为收敛
    if not converged and result.status != 1 and iterations < max_iterations:
        options = {"maxiter": max(1, max_iterations - iterations), "ftol": tolerance}
        polish = minimize(objective, result.x, method="L-BFGS-B", jac=gradient, bounds=bounds, options=options)
        iterations += int(polish.nit)
        improvement = _relative_change(best_f, float(polish.fun))
        if float(polish.fun) < best_f:
            best_x, best_f = polish.x, float(polish.fun)
        converged = bool(polish.success) or improvement < tolerance
        result = polish

    record.iterations = iterations
    record.message = str(result.message)
    if best_f >= PENALTY:
        record.message = "收敛点处似然不可计算"
        return record, None
    record.converged = converged
    record.log_lik = -best_f
    record.at_bound = flag_at_bound(best_x, template, bounds)
    return record, np.asarray(best_x)


def _run_task(task: Dict[str, Any]) -> Tuple[StartRecord, Optional[np.ndarray]]:
    return optimize_start(**task)


def run_tasks(tasks: List[Dict[str, Any]], workers: int) -> List[Tuple[StartRecord, Optional[np.ndarray]]]:
    """
    执行一组起点任务，结果按任务顺序返回

    参数:
        tasks: optimize_start的关键字参数字典列表
        workers: 进程数，1时在当前进程顺序执行
    """
    if workers <= 1 or len(tasks) <= 1:
        return [_run_task(task) for task in tasks]
    settings = current_settings()
    with ProcessPoolExecutor(max_workers=workers, initializer=worker_initializer,
                             initargs=(settings["level"], settings["quiet"])) as pool:
        return list(pool.map(_run_task, tasks))
