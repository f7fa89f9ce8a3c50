#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
运动轨迹服务模块
轨迹文件读取、步长与转角计算，以及按状态数范围拟合的案例分析流程

输入为平面投影坐标；表头声明坐标单位（例如x_m、y_km），统一换算为米
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import pytz
from astropy import units as u

from common.distributions import VonMises, ZeroInflatedGamma, wrap_angle
from common.errors import ConfigError, DataError, IngestError
from common.hmm_model import (HmmSpec, ObservationSeries, simulate, state_occupancy, viterbi,
                              weighted_density_curves)
from src.config.settings import MOVEMENT_CONFIG, TIMEZONE
from src.services.diagnostics_service import acf_table, ks_normality, pseudo_residuals, qq_points
from src.services.fit_service import FitConfig, family_template
from src.services.selection_service import CriteriaTable, criteria_table
from src.utils import serialization

# 设置日志
logger = logging.getLogger(__name__)

STEP_CHANNEL = 0
ANGLE_CHANNEL = 1

CRITERIA_FILE = "criteria.csv"
STATES_FILE = "states.csv"
DENSITIES_FILE = "densities.csv"
QQ_FILE = "residual_qq.csv"
ACF_FILE = "residual_acf.csv"
SUMMARY_FILE = "summary.json"


@dataclass
class Track:
    """
    单个个体的规则间隔轨迹

    参数:
        animal_id: 个体编号
        timestamps: UTC时间戳（规则间隔，缺测时刻已补齐）
        x / y: 平面坐标（米），缺失为NaN
        interval: 采样间隔
    """

    animal_id: str
    timestamps: pd.DatetimeIndex
    x: np.ndarray
    y: np.ndarray
    interval: pd.Timedelta

    def __len__(self) -> int:
        return len(self.x)

    @property
    def n_missing(self) -> int:
        return int(np.sum(np.isnan(self.x) | np.isnan(self.y)))


@dataclass
class MoveSeries:
    """
    步长与转角序列；第t个时刻为从位置t到t+1的步长，以及该步相对上一步的转角

    参数:
        animal_id: 个体编号
        step: 步长（米）
        angle: 转角（弧度，逆时针为正），无定义时为NaN
    """

    animal_id: str
    step: np.ndarray
    angle: np.ndarray

    def to_array(self) -> np.ndarray:
        return np.column_stack([self.step, self.angle])


def _coordinate_unit(column: str) -> u.UnitBase:
    _, _, suffix = column.partition("_")
    if not suffix:
        raise IngestError(f"坐标列{column}未声明单位（应为x_<单位>形式，例如x_m）", line=1)
    try:
        unit = u.Unit(suffix)
    except ValueError as e:
        raise IngestError(f"无法识别坐标列{column}的单位'{suffix}'", line=1) from e
    if unit.physical_type != "length":
        raise IngestError(f"坐标列{column}的单位'{suffix}'不是长度单位", line=1)
    return unit


def _parse_header(columns: Sequence[str]) -> Tuple[str, str, u.UnitBase]:
    lowered = [c.strip().lower() for c in columns]
    for required in ("id", "timestamp"):
        if required not in lowered:
            raise IngestError(f"表头缺少{required}列", line=1)
    x_cols = [c for c in columns if c.strip().lower().startswith("x_")]
    y_cols = [c for c in columns if c.strip().lower().startswith("y_")]
    if len(x_cols) != 1 or len(y_cols) != 1:
        raise IngestError("表头必须恰好有一个x_<单位>列和一个y_<单位>列", line=1)
    x_unit, y_unit = _coordinate_unit(x_cols[0].strip()), _coordinate_unit(y_cols[0].strip())
    if x_unit != y_unit:
        raise IngestError(f"x与y的单位不一致: {x_unit} / {y_unit}", line=1)
    return x_cols[0], y_cols[0], x_unit


def _to_utc(value: str, line: int, tz) -> pd.Timestamp:
    try:
        stamp = pd.Timestamp(value)
    except (ValueError, TypeError) as e:
        raise IngestError(f"无法解析时间戳'{value}'", line=line) from e
    if stamp is pd.NaT:
        raise IngestError("时间戳为空", line=line)
    if stamp.tzinfo is None:
        stamp = pd.Timestamp(tz.localize(stamp.to_pydatetime()))
    return stamp.tz_convert(pytz.UTC)


def _coordinate(value: str, line: int) -> float:
    text = value.strip()
    if not text:
        return math.nan
    try:
        number = float(text)
    except ValueError as e:
        raise IngestError(f"坐标'{value}'不是数值", line=line) from e
    if not math.isfinite(number):
        raise IngestError(f"坐标'{value}'不是有限值", line=line)
    return number


def _regularize(animal_id: str, stamps: List[pd.Timestamp], lines: List[int],
                x: List[float], y: List[float], interval: Optional[pd.Timedelta]) -> Track:
    for k in range(1, len(stamps)):
        if stamps[k] <= stamps[k - 1]:
            raise IngestError(f"个体{animal_id}的时间戳不是严格递增", line=lines[k])
    if len(stamps) < 2:
        step = interval or pd.Timedelta(hours=1)
    else:
        diffs = [stamps[k] - stamps[k - 1] for k in range(1, len(stamps))]
        step = interval or min(diffs)
    slots = [0]
    for k in range(1, len(stamps)):
        ratio = (stamps[k] - stamps[0]) / step
        slot = int(round(ratio))
        if abs(ratio - slot) > 1e-6:
            raise IngestError(f"个体{animal_id}的时间戳与间隔{step}不对齐", line=lines[k])
        slots.append(slot)
    n_slots = slots[-1] + 1
    xs = np.full(n_slots, np.nan)
    ys = np.full(n_slots, np.nan)
    xs[slots] = x
    ys[slots] = y
    timestamps = pd.DatetimeIndex([stamps[0] + i * step for i in range(n_slots)])
    gaps = n_slots - len(stamps)
    if gaps:
        logger.info(f"个体{animal_id}: 补齐{gaps}个缺测时刻")
    return Track(animal_id, timestamps, xs, ys, step)


def ingest_tracks(path: Union[str, Path], interval: Optional[str] = None,
                  timezone: str = TIMEZONE) -> List[Track]:
    """
    读取轨迹文件

    参数:
        path: CSV文件，表头为id, timestamp, x_<单位>, y_<单位>；坐标留空表示缺失
        interval: 采样间隔（例如"1h"），缺省取各轨迹相邻时间差的最小值
        timezone: 不带时区的时间戳按此时区解释
    返回:
        按文件中首次出现顺序排列的轨迹列表
    异常:
        IngestError: 格式错误、时间不递增或不规则，错误信息含行号
    """
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except FileNotFoundError as e:
        raise IngestError(f"轨迹文件不存在: {path}") from e
    except pd.errors.ParserError as e:
        raise IngestError(f"无法解析轨迹文件 {path}: {e}") from e
    x_col, y_col, unit = _parse_header(list(frame.columns))
    columns = {c.strip().lower(): c for c in frame.columns}
    id_col, time_col = columns["id"], columns["timestamp"]
    tz = pytz.timezone(timezone)
    step = pd.Timedelta(interval) if interval else None
    factor = float((1.0 * unit).to(u.m).value)

    grouped: Dict[str, Dict[str, list]] = {}
    for position, values in enumerate(frame.to_dict(orient="records")):
        line = position + 2
        animal_id = values[id_col].strip()
        if not animal_id:
            raise IngestError("个体编号为空", line=line)
        x = _coordinate(values[x_col], line)
        y = _coordinate(values[y_col], line)
        if math.isnan(x) != math.isnan(y):
            raise IngestError("x与y必须同时给出或同时留空", line=line)
        entry = grouped.setdefault(animal_id, {"stamps": [], "lines": [], "x": [], "y": []})
        entry["stamps"].append(_to_utc(values[time_col].strip(), line, tz))
        entry["lines"].append(line)
        entry["x"].append(x * factor)
        entry["y"].append(y * factor)

    if not grouped:
        raise IngestError(f"轨迹文件{path}没有数据行")
    tracks = [_regularize(animal_id, e["stamps"], e["lines"], e["x"], e["y"], step)
              for animal_id, e in grouped.items()]
    logger.info(f"读取{len(tracks)}条轨迹, 共{sum(len(t) for t in tracks)}个时刻, "
                f"缺失{sum(t.n_missing for t in tracks)}个位置")
    return tracks


def steps_and_turns(track: Track) -> MoveSeries:
    """
    由位置计算步长与转角

    转角为相邻两步方向的有符号变化 arg((z_{t+1} − z_t)/(z_t − z_{t−1}))，逆时针为正，
    相邻任一步长为0或位置缺失时转角缺失
    """
    z = np.asarray(track.x, dtype=float) + 1j * np.asarray(track.y, dtype=float)
    moves = np.diff(z)
    step = np.abs(moves)
    angle = np.full(len(moves), np.nan)
    if len(moves) > 1:
        previous, current = moves[:-1], moves[1:]
        defined = (np.abs(previous) > 0) & (np.abs(current) > 0)
        with np.errstate(invalid="ignore", divide="ignore"):
            turns = np.angle(current / previous)
        angle[1:] = np.where(defined, wrap_angle(turns), np.nan)
    return MoveSeries(track.animal_id, step, angle)


def movement_series(tracks: Sequence[Track]) -> Tuple[ObservationSeries, List[str]]:
    """
    多条轨迹的两通道观测序列（步长、转角）

    返回:
        (观测序列, 参与的个体编号)；位置少于3个或全部缺失的轨迹被跳过
    """
    arrays, ids = [], []
    for track in tracks:
        if len(track) < 3:
            logger.warning(f"个体{track.animal_id}只有{len(track)}个位置，已跳过")
            continue
        moves = steps_and_turns(track).to_array()
        if np.all(np.isnan(moves)):
            logger.warning(f"个体{track.animal_id}的步长与转角全部缺失，已跳过")
            continue
        arrays.append(moves)
        ids.append(track.animal_id)
    if not arrays:
        raise DataError("没有可用的轨迹")
    return ObservationSeries(tuple(arrays)), ids


def simulate_tracks(model: HmmSpec, lengths: Sequence[int], rng: np.random.Generator,
                    interval: str = "1h", start: str = "2020-01-01T00:00:00Z") -> Tuple[List[Track], list]:
    """
    由步长-转角HMM模拟位置轨迹（第一步方向均匀随机）

    返回:
        (轨迹列表, 每条轨迹的真实状态序列)
    """
    moves, states = simulate(model, [n - 1 for n in lengths], rng)
    step = pd.Timedelta(interval)
    origin = pd.Timestamp(start)
    tracks = []
    for index, values in enumerate(moves.tracks):
        heading = rng.uniform(-math.pi, math.pi) + np.cumsum(np.concatenate([[0.0], values[1:, ANGLE_CHANNEL]]))
        z = np.concatenate([[0.0], np.cumsum(values[:, STEP_CHANNEL] * np.exp(1j * heading))])
        timestamps = pd.DatetimeIndex([origin + i * step for i in range(len(z))])
        tracks.append(Track(f"sim{index + 1}", timestamps, z.real.copy(), z.imag.copy(), step))
    return tracks, states


def tracks_frame(tracks: Sequence[Track]) -> pd.DataFrame:
    """轨迹的文件表示（坐标单位为米）"""
    frames = [pd.DataFrame({"id": t.animal_id,
                            "timestamp": t.timestamps.strftime("%Y-%m-%dT%H:%M:%SZ"),
                            "x_m": t.x, "y_m": t.y}) for t in tracks]
    return pd.concat(frames, ignore_index=True)


@dataclass(frozen=True)
class MovementConfig:
    """
    案例分析配置

    参数:
        n_range: 拟合的状态数
        fit: 拟合配置（默认50个起点）
        zero_inflation: 默认True（零膨胀伽马步长）；False改用普通伽马，"auto"仅在数据含零步长时使用零膨胀
        step_grid_points / angle_grid_points: 密度曲线的网格点数
        acf_max_lag: 残差自相关的最大滞后
        interval: 采样间隔，缺省自动推断
    """

    n_range: Tuple[int, ...] = MOVEMENT_CONFIG['n_range']
    fit: FitConfig = field(default_factory=lambda: FitConfig(n_starts=MOVEMENT_CONFIG['n_starts']))
    zero_inflation: Union[str, bool] = MOVEMENT_CONFIG['zero_inflation']
    step_grid_points: int = MOVEMENT_CONFIG['step_grid_points']
    angle_grid_points: int = MOVEMENT_CONFIG['angle_grid_points']
    acf_max_lag: int = MOVEMENT_CONFIG['acf_max_lag']
    interval: Optional[str] = None

    def __post_init__(self):
        if not self.n_range:
            raise ConfigError("状态数范围不能为空")
        if self.zero_inflation not in ("auto", True, False):
            raise ConfigError(f"zero_inflation只能为auto、true或false，当前为{self.zero_inflation}")

    @classmethod
    def from_dict(cls, config: Dict[str, Any]) -> "MovementConfig":
        config = dict(config)
        known = {"n_range", "fit", "starts", "seed", "zero_inflation", "step_grid_points",
                 "angle_grid_points", "acf_max_lag", "interval", "input", "synthetic", "workers", "out"}
        unknown = set(config) - known
        if unknown:
            raise ConfigError(f"未知的运动分析配置项: {sorted(unknown)}")
        fit_dict = dict(config.get("fit", {}))
        fit_dict.setdefault("n_starts", int(config.get("starts", MOVEMENT_CONFIG['n_starts'])))
        if "seed" in config:
            fit_dict["seed"] = int(config["seed"])
        if "workers" in config and config["workers"] is not None:
            fit_dict["workers"] = int(config["workers"])
        return cls(
            n_range=tuple(int(n) for n in config.get("n_range", MOVEMENT_CONFIG['n_range'])),
            fit=FitConfig.from_dict(fit_dict),
            zero_inflation=config.get("zero_inflation", MOVEMENT_CONFIG['zero_inflation']),
            step_grid_points=int(config.get("step_grid_points", MOVEMENT_CONFIG['step_grid_points'])),
            angle_grid_points=int(config.get("angle_grid_points", MOVEMENT_CONFIG['angle_grid_points'])),
            acf_max_lag=int(config.get("acf_max_lag", MOVEMENT_CONFIG['acf_max_lag'])),
            interval=config.get("interval"),
        )


@dataclass
class ReportBundle:
    """案例分析结果：准则表、解码状态、密度曲线、残差QQ与ACF数据以及汇总"""

    criteria: pd.DataFrame
    states: pd.DataFrame
    densities: pd.DataFrame
    residual_qq: pd.DataFrame
    residual_acf: pd.DataFrame
    summary: Dict[str, Any]
    table: Optional[CriteriaTable] = None

    def write(self, out_dir: Union[str, Path]) -> List[str]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        serialization.write_frame(out_dir / CRITERIA_FILE, self.criteria)
        serialization.write_frame(out_dir / STATES_FILE, self.states)
        serialization.write_frame(out_dir / DENSITIES_FILE, self.densities)
        serialization.write_frame(out_dir / QQ_FILE, self.residual_qq)
        serialization.write_frame(out_dir / ACF_FILE, self.residual_acf)
        serialization.write_json(out_dir / SUMMARY_FILE, self.summary)
        logger.info(f"分析报告已写入 {out_dir}")
        return [CRITERIA_FILE, STATES_FILE, DENSITIES_FILE, QQ_FILE, ACF_FILE, SUMMARY_FILE]


def _step_family(series: ObservationSeries, zero_inflation: Union[str, bool]) -> str:
    if zero_inflation == "auto":
        has_zero = bool(np.any(series.channel_values(STEP_CHANNEL) == 0))
        return "zigamma" if has_zero else "gamma"
    return "zigamma" if zero_inflation else "gamma"


def _long_density(frame: pd.DataFrame, n_states: int, channel: str) -> pd.DataFrame:
    long = frame.melt(id_vars="x", var_name="state", value_name="density")
    long.insert(0, "channel", channel)
    long.insert(0, "n_states", n_states)
    return long


def case_study_pipeline(tracks: Sequence[Track], config: Optional[MovementConfig] = None) -> ReportBundle:
    """
    案例分析流程：拟合各状态数的步长-转角HMM，输出准则表、解码状态、
    按占用比例加权的状态密度曲线以及步长伪残差的QQ与ACF数据

    参数:
        tracks: 轨迹
        config: 分析配置
    返回:
        ReportBundle
    """
    config = config or MovementConfig()
    series, ids = movement_series(tracks)
    step_family = _step_family(series, config.zero_inflation)
    logger.info(f"案例分析: {len(ids)}条轨迹, T={series.n_observed_slots()}, 步长分布{step_family}, "
                f"N={list(config.n_range)}")

    table = criteria_table(series, lambda n: family_template(n, [step_family, "vonmises"]),
                           config.n_range, config.fit)
    criteria = table.to_frame()

    steps = series.channel_values(STEP_CHANNEL)
    positive = steps[steps > 0]
    upper = float(np.quantile(positive, 0.99)) if positive.size else 1.0
    step_grid = np.linspace(upper / config.step_grid_points, upper, config.step_grid_points)
    angle_grid = np.linspace(-math.pi, math.pi, config.angle_grid_points)
    max_lag = min(config.acf_max_lag, min(series.lengths) - 1)

    state_frames, density_frames, qq_frames, acf_frames = [], [], [], []
    per_model: Dict[str, Any] = {}
    for n_states in sorted(table.fits):
        model = table.fits[n_states].best_model
        decoded = viterbi(model, series)
        for animal_id, path in zip(ids, decoded):
            state_frames.append(pd.DataFrame({"n_states": n_states, "id": animal_id,
                                              "slot": np.arange(1, len(path) + 1), "state": path + 1}))
        density_frames.append(_long_density(
            weighted_density_curves(model, decoded, STEP_CHANNEL, step_grid), n_states, "step"))
        density_frames.append(_long_density(
            weighted_density_curves(model, decoded, ANGLE_CHANNEL, angle_grid), n_states, "angle"))

        rng = np.random.default_rng(np.random.SeedSequence(entropy=int(config.fit.seed), spawn_key=(0, n_states)))
        residuals = pseudo_residuals(model, series, STEP_CHANNEL, rng)
        qq = qq_points(residuals)
        qq.insert(0, "n_states", n_states)
        qq_frames.append(qq)
        acf_frame = acf_table(residuals, max_lag)
        acf_frame.insert(0, "n_states", n_states)
        acf_frames.append(acf_frame)
        statistic, p_value = ks_normality(residuals)
        per_model[str(n_states)] = {
            "occupancy": state_occupancy(decoded, n_states).tolist(),
            "ks_statistic": statistic,
            "ks_p_value": p_value,
            "n_clamped": residuals.n_clamped,
            "model": model.to_dict(),
        }

    summary = {
        "n_tracks": len(ids),
        "track_ids": ids,
        "data_size": series.n_observed_slots(),
        "step_family": step_family,
        "n_range": list(config.n_range),
        "winners": table.winners,
        "criteria": [r.to_dict() for r in table.rows],
        "models": per_model,
    }

    def _concat(frames: List[pd.DataFrame]) -> pd.DataFrame:
        return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()

    return ReportBundle(criteria=criteria, states=_concat(state_frames), densities=_concat(density_frames),
                        residual_qq=_concat(qq_frames), residual_acf=_concat(acf_frames),
                        summary=summary, table=table)


def synthetic_model(settings: Optional[Dict[str, Any]] = None) -> HmmSpec:
    """零膨胀伽马步长 + von Mises转角的模拟用模型"""
    settings = {**MOVEMENT_CONFIG['synthetic'], **(settings or {})}
    n = len(settings['step_means'])
    diagonal = float(settings['tpm_diagonal'])
    tpm = np.full((n, n), (1.0 - diagonal) / max(n - 1, 1))
    np.fill_diagonal(tpm, diagonal)
    steps = tuple(ZeroInflatedGamma(float(z), float(m), float(s)) for z, m, s in
                  zip(settings['zero_mass'], settings['step_means'], settings['step_shapes']))
    angles = tuple(VonMises(float(wrap_angle(loc)), float(k)) for loc, k in
                   zip(settings['angle_locations'], settings['angle_concentrations']))
    return HmmSpec(tpm, (steps, angles))


def synthetic_tracks(settings: Optional[Dict[str, Any]], rng: np.random.Generator) -> List[Track]:
    """按settings模拟若干条轨迹"""
    settings = {**MOVEMENT_CONFIG['synthetic'], **(settings or {})}
    lengths = [int(settings['length'])] * int(settings['n_tracks'])
    tracks, _ = simulate_tracks(synthetic_model(settings), lengths, rng, interval=settings['interval'])
    return tracks
