#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
重复实验服务模块
按情景生成R组数据，对每组拟合一系列状态数，统计各准则的选择百分比与估计偏差

每个(重复, N)写出一条原始记录，表格可以不经重新拟合从记录重算
"""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from common.errors import ConfigError, HmmLabError
from src.config.settings import BENCH_CONFIG
from src.services.fit_service import FitConfig, fit, gamma_template
from src.services.scenario_service import ScenarioConfig, generate, true_n_states, true_parameters
from src.services.selection_service import CRITERIA, CriteriaRow, criteria_row, row_from_values, select_winners
from src.utils import serialization
from src.utils.log_config import current_settings, worker_initializer
from src.utils.memory_monitor import log_snapshot, resolve_workers

# 设置日志
logger = logging.getLogger(__name__)

RECORDS_FILE = "records.jsonl"
SELECTION_FILE = "selection.csv"
BIAS_FILE = "bias.csv"
SUMMARY_FILE = "summary.txt"
TRUTH_FILE = "truth.json"


@dataclass(frozen=True)
class ExperimentPlan:
    """
    重复实验计划

    参数:
        scenario: 情景配置（种子即主种子）
        replicates: 重复次数R
        n_range: 拟合的状态数
        fit: 拟合配置
        workers: 重复层面的并行进程数
        out_dir: 输出目录，None时不写文件
    """

    scenario: ScenarioConfig
    replicates: int = BENCH_CONFIG['replicates']
    n_range: Tuple[int, ...] = BENCH_CONFIG['n_range']
    fit: FitConfig = field(default_factory=FitConfig)
    workers: int = 1
    out_dir: Optional[Path] = None

    def __post_init__(self):
        if int(self.replicates) < 1:
            raise ConfigError(f"重复次数必须至少为1，当前为{self.replicates}")
        if not self.n_range:
            raise ConfigError("状态数范围不能为空")

    @property
    def seed(self) -> int:
        return self.scenario.seed

    @classmethod
    def from_dict(cls, config: Dict[str, Any], out_dir: Optional[Path] = None) -> "ExperimentPlan":
        """
        由声明式配置创建计划

        配置键: scenario, T, knobs, replicates, n_range, starts, seed, workers, fit
        """
        config = dict(config)
        known = {"scenario", "T", "knobs", "replicates", "n_range", "starts", "seed", "workers", "fit", "out"}
        unknown = set(config) - known
        if unknown:
            raise ConfigError(f"未知的实验配置项: {sorted(unknown)}")
        scenario_id = str(config.get("scenario", "8"))
        seed = int(config.get("seed", 1))
        scenario = ScenarioConfig.from_dict({"scenario_id": scenario_id, "T": config.get("T"),
                                             "seed": seed, "knobs": config.get("knobs", {})})
        default_range = BENCH_CONFIG['n_range_appendix'] if scenario_id in ("9", "10") else BENCH_CONFIG['n_range']
        fit_dict = dict(config.get("fit", {}))
        fit_dict.setdefault("n_starts", int(config.get("starts", BENCH_CONFIG['n_starts'])))
        fit_dict["seed"] = seed
        workers = resolve_workers(config.get("workers", BENCH_CONFIG['workers']))
        out = out_dir if out_dir is not None else config.get("out")
        return cls(
            scenario=scenario,
            replicates=int(config.get("replicates", BENCH_CONFIG['replicates'])),
            n_range=tuple(int(n) for n in config.get("n_range", default_range)),
            fit=FitConfig.from_dict(fit_dict),
            workers=workers,
            out_dir=Path(out) if out is not None else None,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scenario": self.scenario.to_dict(),
            "replicates": self.replicates,
            "n_range": list(self.n_range),
            "fit": {"n_starts": self.fit.n_starts, "seed": self.fit.seed,
                    "max_iterations": self.fit.max_iterations,
                    "convergence_tolerance": self.fit.convergence_tolerance,
                    "gradient": self.fit.gradient},
        }


@dataclass
class SelectionTable:
    """
    选择百分比表

    参数:
        percentages: 行为准则、列为状态数的百分比
        n_valid: 参与统计的重复数
        n_excluded: 因拟合失败被排除的重复数
    """

    percentages: pd.DataFrame
    n_valid: int
    n_excluded: int

    def to_frame(self) -> pd.DataFrame:
        frame = self.percentages.copy()
        frame.columns = [f"N={c}" for c in frame.columns]
        frame.insert(0, "criterion", [c.upper() for c in frame.index])
        frame["n_valid"] = self.n_valid
        frame["n_excluded"] = self.n_excluded
        return frame.reset_index(drop=True)


@dataclass
class BiasTable:
    """
    估计偏差表：每个拟合状态数、每个发射参数在各重复上的均值与标准差

    参数:
        rows: 列为n_states、parameter、estimate_mean、estimate_sd、n、true_value
        n_excluded: 被排除的退化拟合个数
    """

    rows: pd.DataFrame
    n_excluded: int

    def to_frame(self) -> pd.DataFrame:
        return self.rows.copy()


@dataclass
class ExperimentResult:
    selection: SelectionTable
    bias: BiasTable
    records: List[Dict[str, Any]]
    truth: Dict[str, Any]


def _model_parameters(model) -> Dict[str, float]:
    """按状态顺序展开的估计参数（模型已按均值排序）"""
    parameters: Dict[str, float] = {}
    for i, dist in enumerate(model.channels[0]):
        parameters[f"mean_{i + 1}"] = float(dist.order_key())
        if hasattr(dist, "shape"):
            parameters[f"shape_{i + 1}"] = float(dist.shape)
    for i in range(model.n_states):
        for j in range(model.n_states):
            parameters[f"tpm_{i + 1}_{j + 1}"] = float(model.tpm[i, j])
    return parameters


def run_replicate(plan: ExperimentPlan, replicate: int, fit_workers: int = 1) -> List[Dict[str, Any]]:
    """
    单次重复：生成数据并拟合n_range中的每个状态数

    返回:
        每个状态数一条记录；拟合失败时记录error字段
    """
    scenario = replace(plan.scenario, spawn_key=(replicate,))
    output = generate(scenario)
    records = []
    for n_states in plan.n_range:
        config = replace(plan.fit, spawn_key=(replicate, int(n_states)), workers=fit_workers)
        record: Dict[str, Any] = {"replicate": replicate, "n_states": int(n_states)}
        try:
            result = fit(output.data, gamma_template(int(n_states)), config)
            row = criteria_row(result, output.data)
        except HmmLabError as e:
            logger.error(f"重复{replicate} N={n_states}拟合失败: {e}")
            record["error"] = str(e)
            records.append(record)
            continue
        record.update(row.to_dict())
        record.update({
            "parameters": _model_parameters(result.best_model),
            "n_converged": result.n_converged,
            "boundary_fallback": result.boundary_fallback,
        })
        records.append(record)
    logger.info(f"重复{replicate}完成")
    return records


def _replicate_task(args: Tuple[ExperimentPlan, int]) -> List[Dict[str, Any]]:
    plan, replicate = args
    return run_replicate(plan, replicate)


def _row_from_record(record: Dict[str, Any]) -> CriteriaRow:
    if record.get("error"):
        return CriteriaRow(n_states=int(record["n_states"]), error=record["error"])
    complete = record.get("complete_data_log_lik")
    return row_from_values(int(record["n_states"]), int(record["n_params"]), float(record["log_lik"]),
                           float(complete) if complete is not None else -math.inf, int(record["data_size"]))


def selection_table(records: Sequence[Dict[str, Any]], n_range: Optional[Sequence[int]] = None) -> SelectionTable:
    """
    由原始记录统计各准则选择每个状态数的百分比

    有任一状态数拟合失败的重复整体排除
    """
    by_replicate: Dict[int, List[Dict[str, Any]]] = {}
    for record in records:
        by_replicate.setdefault(int(record["replicate"]), []).append(record)
    if n_range is None:
        n_range = sorted({int(r["n_states"]) for r in records})
    counts = pd.DataFrame(0.0, index=list(CRITERIA), columns=list(n_range))
    n_valid = n_excluded = 0
    for replicate in sorted(by_replicate):
        rows = [_row_from_record(r) for r in sorted(by_replicate[replicate], key=lambda r: r["n_states"])]
        if any(not r.ok for r in rows):
            n_excluded += 1
            continue
        n_valid += 1
        for name, winner in select_winners(rows).items():
            if winner is not None:
                counts.loc[name, winner] += 1
    if n_excluded:
        logger.warning(f"{n_excluded}次重复因拟合失败被排除")
    percentages = counts * (100.0 / n_valid) if n_valid else counts
    return SelectionTable(percentages=percentages, n_valid=n_valid, n_excluded=n_excluded)


def _is_emission_parameter(name: str) -> bool:
    return name.startswith("mean_") or name.startswith("shape_")


def bias_summary(records: Sequence[Dict[str, Any]], truth: Dict[str, Any]) -> BiasTable:
    """
    各拟合状态数下发射参数估计的样本均值与标准差

    参数:
        records: 原始记录（参数已按均值排序）
        truth: 情景真实参数（parameters键）
    返回:
        BiasTable；只有一个有效估计时标准差为空
    """
    true_values = truth.get("parameters", {})
    estimates: Dict[Tuple[int, str], List[float]] = {}
    n_excluded = 0
    for record in records:
        if record.get("error") or record.get("boundary_fallback"):
            n_excluded += 1
            continue
        for name, value in record["parameters"].items():
            if _is_emission_parameter(name):
                estimates.setdefault((int(record["n_states"]), name), []).append(float(value))
    rows = []
    for (n_states, name) in sorted(estimates, key=lambda k: (k[0], k[1].split("_")[0], int(k[1].split("_")[1]))):
        values = np.asarray(estimates[(n_states, name)])
        rows.append({
            "n_states": n_states,
            "parameter": name,
            "estimate_mean": float(np.mean(values)),
            "estimate_sd": float(np.std(values, ddof=1)) if values.size > 1 else None,
            "n": int(values.size),
            "true_value": true_values.get(name),
        })
    if n_excluded:
        logger.warning(f"偏差统计排除了{n_excluded}个失败或落在边界上的拟合")
    columns = ["n_states", "parameter", "estimate_mean", "estimate_sd", "n", "true_value"]
    return BiasTable(rows=pd.DataFrame(rows, columns=columns), n_excluded=n_excluded)


def _summary_text(plan: Optional[ExperimentPlan], selection: SelectionTable, bias: BiasTable) -> str:
    lines = []
    if plan is not None:
        lines.append(f"情景 {plan.scenario.scenario_id}: R={plan.replicates}, T={plan.scenario.length}, "
                     f"N={list(plan.n_range)}, 起点数={plan.fit.n_starts}, 种子={plan.seed}")
    lines.append(f"有效重复 {selection.n_valid}，排除 {selection.n_excluded}")
    lines.append("")
    lines.append("各准则选择状态数的百分比:")
    lines.append(selection.to_frame().to_string(index=False, float_format=lambda v: f"{v:.1f}"))
    lines.append("")
    lines.append("发射参数估计（均值、标准差）:")
    lines.append(bias.to_frame().to_string(index=False, float_format=lambda v: f"{v:.4f}"))
    return "\n".join(lines) + "\n"


def write_tables(out_dir: Path, selection: SelectionTable, bias: BiasTable,
                 plan: Optional[ExperimentPlan] = None) -> List[str]:
    serialization.write_frame(out_dir / SELECTION_FILE, selection.to_frame())
    serialization.write_frame(out_dir / BIAS_FILE, bias.to_frame())
    with open(out_dir / SUMMARY_FILE, "w", encoding="utf-8") as f:
        f.write(_summary_text(plan, selection, bias))
    return [SELECTION_FILE, BIAS_FILE, SUMMARY_FILE]


def run_experiment(plan: ExperimentPlan) -> ExperimentResult:
    """
    执行重复实验

    参数:
        plan: 实验计划
    返回:
        ExperimentResult；plan.out_dir非空时同时写出records.jsonl、selection.csv、bias.csv、summary.txt、truth.json
    """
    logger.info(f"开始重复实验: 情景{plan.scenario.scenario_id}, R={plan.replicates}, "
                f"N={list(plan.n_range)}, 进程数{plan.workers}")
    log_snapshot("实验开始")
    if plan.workers > 1 and plan.replicates > 1:
        settings = current_settings()
        with ProcessPoolExecutor(max_workers=plan.workers, initializer=worker_initializer,
                                 initargs=(settings["level"], settings["quiet"])) as pool:
            batches = list(pool.map(_replicate_task, [(plan, r) for r in range(plan.replicates)]))
    else:
        batches = [run_replicate(plan, r, plan.fit.workers) for r in range(plan.replicates)]
    records = [record for batch in batches for record in batch]
    log_snapshot("实验结束")

    scenario_id = plan.scenario.scenario_id
    truth = {"scenario_id": scenario_id, "n_states": true_n_states(scenario_id),
             "parameters": true_parameters(plan.scenario)}
    selection = selection_table(records, sorted(plan.n_range))
    bias = bias_summary(records, truth)

    if plan.out_dir is not None:
        out_dir = Path(plan.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        serialization.write_jsonl(out_dir / RECORDS_FILE, records)
        serialization.write_json(out_dir / TRUTH_FILE, truth)
        write_tables(out_dir, selection, bias, plan)
        logger.info(f"实验结果已写入 {out_dir}")
    return ExperimentResult(selection=selection, bias=bias, records=records, truth=truth)


def recompute_tables(records_path: Path, truth: Optional[Dict[str, Any]] = None) -> Tuple[SelectionTable, BiasTable]:
    """
    从已保存的原始记录重算选择表与偏差表，不重新拟合

    参数:
        records_path: records.jsonl路径
        truth: 真实参数；缺省时读取同目录下的truth.json
    """
    records_path = Path(records_path)
    records = list(serialization.read_jsonl(records_path))
    if truth is None:
        truth = serialization.read_json(records_path.parent / TRUTH_FILE)
    return selection_table(records), bias_summary(records, truth)
