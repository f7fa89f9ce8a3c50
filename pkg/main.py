#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
HMM状态数选择实验室 - 命令行入口

子命令: simulate, fit, select, diagnose, bench, movement
每次运行读取一个JSON配置文件，命令行参数覆盖配置；输出目录中写出manifest.json
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from common.errors import ConfigError, HmmLabError
from common.hmm_model import HmmSpec
from src.config.settings import DIAGNOSTICS_CONFIG, FIT_CONFIG, LOG_CONFIG, MOVEMENT_CONFIG, SCENARIO_DEFAULTS
from src.services import bench_service, diagnostics_service, movement_service, scenario_service
from src.services.fit_service import FitConfig, FitResult, family_template, fit
from src.services.selection_service import criteria_table
from src.utils import serialization
from src.utils.log_config import setup_logging
from src.utils.memory_monitor import resolve_workers

# 设置日志
logger = logging.getLogger(__name__)

# 不影响输出内容、不写入清单的配置键
_RUNTIME_KEYS = ("workers", "out")


class _ArgumentParser(argparse.ArgumentParser):
    """参数错误转为ConfigError，由main统一输出结构化错误"""

    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON配置文件")
    common.add_argument("--seed", type=int, help="主种子（覆盖配置）")
    common.add_argument("--out", type=Path, help="输出目录（覆盖配置）")
    common.add_argument("--workers", type=int, help="并行进程数（覆盖配置）")
    common.add_argument("--quiet", action="store_true", help="控制台只输出警告及以上")

    parser = _ArgumentParser(prog="hmmlab", description="HMM状态数选择实验室")
    subparsers = parser.add_subparsers(dest="command", parser_class=_ArgumentParser)
    subparsers.required = True
    for name, help_text in (
        ("simulate", "按情景生成数据集"),
        ("fit", "对数据集拟合一个状态数"),
        ("select", "对一系列状态数拟合并计算AIC/BIC/ICL"),
        ("diagnose", "伪残差诊断与模拟检验"),
        ("bench", "重复实验：选择百分比与估计偏差"),
        ("movement", "轨迹案例分析流程"),
    ):
        subparsers.add_parser(name, parents=[common], help=help_text)
    return parser


def load_config(args: argparse.Namespace) -> Dict[str, Any]:
    """读取配置文件并应用命令行覆盖"""
    config: Dict[str, Any] = {}
    if args.config is not None:
        config = serialization.read_json(args.config)
        if not isinstance(config, dict):
            raise ConfigError(f"配置文件{args.config}顶层必须是对象")
    if args.seed is not None:
        config["seed"] = args.seed
    if args.out is not None:
        config["out"] = str(args.out)
    if args.workers is not None:
        config["workers"] = args.workers
    return config


def _out_dir(config: Dict[str, Any]) -> Path:
    if "out" not in config:
        raise ConfigError("缺少输出目录（--out或配置中的out）")
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest_config(config: Dict[str, Any]) -> Dict[str, Any]:
    return {k: v for k, v in config.items() if k not in _RUNTIME_KEYS}


def _require(config: Dict[str, Any], key: str) -> Any:
    if key not in config:
        raise ConfigError(f"配置缺少{key}")
    return config[key]


def _fit_config(config: Dict[str, Any], spawn_key=()) -> FitConfig:
    fit_dict = dict(config.get("fit", {}))
    if "starts" in config:
        fit_dict.setdefault("n_starts", int(config["starts"]))
    fit_dict["seed"] = int(config.get("seed", FIT_CONFIG['seed']))
    if config.get("workers") is not None:
        fit_dict["workers"] = resolve_workers(int(config["workers"]))
    fit_dict["spawn_key"] = list(spawn_key)
    return FitConfig.from_dict(fit_dict)


def _template_factory(config: Dict[str, Any], n_channels: int) -> Callable[[int], HmmSpec]:
    families = config.get("families", ["gamma"] * n_channels)
    if len(families) != n_channels:
        raise ConfigError(f"families应有{n_channels}项，当前{len(families)}项")
    components = int(config.get("mixture_components", 2))
    return lambda n: family_template(n, families, components)


def run_simulate(config: Dict[str, Any]) -> List[str]:
    config.setdefault("seed", SCENARIO_DEFAULTS['seed'])
    scenario = scenario_service.ScenarioConfig.from_dict(
        {k: v for k, v in config.items() if k in ("scenario", "scenario_id", "T", "seed", "knobs")})
    output = scenario_service.generate(scenario)
    out = _out_dir(config)
    serialization.write_dataset(out / "dataset.csv", output.data, output.true_states)
    truth = {k: v for k, v in output.truth.items() if k in ("scenario_id", "n_states", "parameters", "model")}
    if "contaminated_indices" in output.truth:
        truth["contaminated_slots"] = [i + 1 for i in output.truth["contaminated_indices"]]
    serialization.write_json(out / "truth.json", truth)
    return ["dataset.csv", "truth.json"]


def run_fit(config: Dict[str, Any]) -> List[str]:
    data, _ = serialization.read_dataset(_require(config, "data"))
    n_states = int(_require(config, "n_states"))
    template = _template_factory(config, data.n_channels)(n_states)
    result = fit(data, template, _fit_config(config, (n_states,)))
    out = _out_dir(config)
    serialization.write_json(out / "fit_result.json", result.to_dict())
    print(f"N={n_states}: logL={result.log_lik:.6f}, p={result.n_params}, T={result.data_size}, "
          f"收敛起点{result.n_converged}/{len(result.starts)}")
    return ["fit_result.json"]


def run_select(config: Dict[str, Any]) -> List[str]:
    data, _ = serialization.read_dataset(_require(config, "data"))
    n_range = [int(n) for n in config.get("n_range", (2, 3, 4, 5))]
    table = criteria_table(data, _template_factory(config, data.n_channels), n_range, _fit_config(config))
    out = _out_dir(config)
    frame = table.to_frame()
    serialization.write_frame(out / "criteria.csv", frame)
    serialization.write_json(out / "fits.json", {str(n): r.to_dict() for n, r in sorted(table.fits.items())})
    print(frame[["n_states", "n_params", "log_lik", "aic", "bic", "icl"]].to_string(index=False))
    print("胜者: " + ", ".join(f"{k.upper()}={v}" for k, v in table.winners.items()))
    return ["criteria.csv", "fits.json"]


def run_diagnose(config: Dict[str, Any]) -> List[str]:
    data, _ = serialization.read_dataset(_require(config, "data"))
    result = FitResult.from_dict(serialization.read_json(_require(config, "fit_result")))
    model = result.best_model
    channel = int(config.get("channel", 0))
    seed = int(config.get("seed", FIT_CONFIG['seed']))
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,)))
    residuals = diagnostics_service.pseudo_residuals(model, data, channel, rng)
    max_lag = min(int(config.get("max_lag", MOVEMENT_CONFIG['acf_max_lag'])), min(data.lengths) - 1)
    out = _out_dir(config)

    pooled = [(k + 1, t + 1, float(z)) for k, track in enumerate(residuals.tracks) for t, z in enumerate(track)]
    serialization.write_frame(out / "residuals.csv", pd.DataFrame(pooled, columns=["track", "slot", "residual"]))
    serialization.write_frame(out / "residual_qq.csv", diagnostics_service.qq_points(residuals))
    serialization.write_frame(out / "residual_acf.csv", diagnostics_service.acf_table(residuals, max_lag))
    n_sims = int(config.get("simulation_check_runs", DIAGNOSTICS_CONFIG['simulation_check_runs']))
    check = diagnostics_service.simulation_check(
        model, data, channel, np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,))), n_sims)
    serialization.write_frame(out / "simulation_check.csv", check)
    statistic, p_value = diagnostics_service.ks_normality(residuals)
    serialization.write_json(out / "summary.json", {
        "channel": channel, "n_residuals": int(residuals.values().size), "n_clamped": residuals.n_clamped,
        "ks_statistic": statistic, "ks_p_value": p_value,
        "mean": float(np.mean(residuals.values())), "variance": float(np.var(residuals.values(), ddof=1)),
    })
    print(f"KS统计量 {statistic:.4f}, p值 {p_value:.4f}")
    return ["residuals.csv", "residual_qq.csv", "residual_acf.csv", "simulation_check.csv", "summary.json"]


def run_bench(config: Dict[str, Any]) -> List[str]:
    config.setdefault("seed", SCENARIO_DEFAULTS['seed'])
    out = _out_dir(config)
    plan = bench_service.ExperimentPlan.from_dict(config, out_dir=out)
    result = bench_service.run_experiment(plan)
    print(result.selection.to_frame().to_string(index=False, float_format=lambda v: f"{v:.1f}"))
    return [bench_service.RECORDS_FILE, bench_service.TRUTH_FILE, bench_service.SELECTION_FILE,
            bench_service.BIAS_FILE, bench_service.SUMMARY_FILE]


def run_movement(config: Dict[str, Any]) -> List[str]:
    movement_config = movement_service.MovementConfig.from_dict(config)
    out = _out_dir(config)
    outputs: List[str] = []
    if "input" in config:
        tracks = movement_service.ingest_tracks(config["input"], interval=movement_config.interval)
    else:
        seed = int(config.get("seed", FIT_CONFIG['seed']))
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
        tracks = movement_service.synthetic_tracks(config.get("synthetic"), rng)
        serialization.write_frame(out / "tracks.csv", movement_service.tracks_frame(tracks))
        outputs.append("tracks.csv")
        logger.info("未指定轨迹文件，使用模拟轨迹")
    bundle = movement_service.case_study_pipeline(tracks, movement_config)
    outputs += bundle.write(out)
    print(bundle.criteria[["n_states", "n_params", "log_lik", "aic", "bic", "icl"]].to_string(index=False))
    return outputs


COMMANDS: Dict[str, Callable[[Dict[str, Any]], List[str]]] = {
    "simulate": run_simulate,
    "fit": run_fit,
    "select": run_select,
    "diagnose": run_diagnose,
    "bench": run_bench,
    "movement": run_movement,
}


def _report(error: Dict[str, Any]) -> None:
    print(json.dumps(error, ensure_ascii=False, sort_keys=True, default=str), file=sys.stderr)


def main(argv: Optional[List[str]] = None) -> int:
    """
    命令行主函数

    返回:
        退出码：0成功，2参数或配置错误，3数据错误，4运行失败
    """
    try:
        args = build_parser().parse_args(argv)
    except HmmLabError as e:
        _report(e.to_report())
        return e.exit_code

    setup_logging(level=LOG_CONFIG['level'], log_file=LOG_CONFIG['log_file'], quiet=args.quiet)
    try:
        config = load_config(args)
        logger.info(f"运行子命令 {args.command}")
        outputs = COMMANDS[args.command](config)
        seed = int(config.get("seed", FIT_CONFIG['seed']))
        serialization.write_manifest(_out_dir(config), args.command, _manifest_config(config), seed, outputs)
    except HmmLabError as e:
        logger.error(f"{args.command}失败: {e}")
        _report(e.to_report())
        return e.exit_code
    except Exception as e:
        logger.exception(f"{args.command}出现未预期的错误")
        _report({"error": type(e).__name__, "message": str(e)})
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
