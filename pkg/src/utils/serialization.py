#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
序列化工具
数据集CSV、拟合结果JSON、运行清单以及JSON Lines记录的读写

所有写出的文件只依赖输入与种子，不含时间戳，重复运行逐字节相同
"""

import hashlib
import json
import logging
import platform
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from common.errors import ConfigError, DataError
from common.hmm_model import ObservationSeries, StateSequence

# 设置日志
logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

# 清单中记录版本的依赖包
TRACKED_PACKAGES = ("numpy", "scipy", "pandas", "numba", "statsmodels", "astropy", "pytz", "psutil")

PathLike = Union[str, Path]


class _Encoder(json.JSONEncoder):
    """numpy标量与数组转换为JSON原生类型"""

    def default(self, o):
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, Path):
            return str(o)
        return super().default(o)


def dumps(payload: Any) -> str:
    """确定性的JSON文本（键排序）"""
    return json.dumps(payload, cls=_Encoder, sort_keys=True, ensure_ascii=False)


def write_json(path: PathLike, payload: Any) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(payload, cls=_Encoder, sort_keys=True, ensure_ascii=False, indent=2))
        f.write("\n")


def read_json(path: PathLike) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise ConfigError(f"文件不存在: {path}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"无法解析JSON文件 {path}: {e}") from e


def write_jsonl(path: PathLike, records: Iterable[Dict[str, Any]]) -> int:
    """每行一条记录，返回写出条数"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write(dumps(record))
            f.write("\n")
            count += 1
    return count


def read_jsonl(path: PathLike) -> Iterator[Dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                yield json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"{path}第{line_no}行不是合法的JSON: {e}") from e


def write_frame(path: PathLike, frame: pd.DataFrame) -> None:
    """CSV表，浮点数按repr精度写出"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")


def dataset_frame(data: ObservationSeries, states: Optional[StateSequence] = None) -> pd.DataFrame:
    """
    数据集的列式表示

    列: track, slot, label, x0..x{C−1}, state（状态从1开始，无真实状态时为空）
    """
    frames = []
    for index, track in enumerate(data.tracks):
        n = len(track)
        columns: Dict[str, Any] = {
            "track": np.full(n, index + 1),
            "slot": np.arange(1, n + 1),
            "label": data.time_labels[index] if data.time_labels is not None else pd.array([pd.NA] * n, dtype="Int64"),
        }
        for c in range(track.shape[1]):
            columns[f"x{c}"] = track[:, c]
        if states is not None:
            columns["state"] = np.asarray(states[index], dtype=np.int64) + 1
        else:
            columns["state"] = pd.array([pd.NA] * n, dtype="Int64")
        frames.append(pd.DataFrame(columns))
    return pd.concat(frames, ignore_index=True)


def write_dataset(path: PathLike, data: ObservationSeries, states: Optional[StateSequence] = None) -> None:
    write_frame(path, dataset_frame(data, states))
    logger.info(f"数据集已写出: {path} ({data.n_tracks}条轨迹, 共{sum(data.lengths)}个时刻)")


def read_dataset(path: PathLike) -> Tuple[ObservationSeries, Optional[StateSequence]]:
    """
    读取write_dataset写出的数据集

    返回:
        (观测序列, 真实状态序列或None)
    """
    try:
        frame = pd.read_csv(path, float_precision="round_trip")
    except FileNotFoundError as e:
        raise DataError(f"数据集不存在: {path}") from e
    value_columns = sorted((c for c in frame.columns if c.startswith("x") and c[1:].isdigit()),
                           key=lambda c: int(c[1:]))
    if "track" not in frame.columns or not value_columns:
        raise DataError(f"{path}缺少track或x0等列")
    tracks, labels, states = [], [], []
    has_labels = "label" in frame.columns and frame["label"].notna().all()
    has_states = "state" in frame.columns and frame["state"].notna().all()
    for _, group in frame.groupby("track", sort=True):
        if "slot" in group.columns:
            group = group.sort_values("slot")
        tracks.append(group[value_columns].to_numpy(dtype=float))
        if has_labels:
            labels.append(group["label"].to_numpy(dtype=np.int64))
        if has_states:
            states.append(group["state"].to_numpy(dtype=np.int64) - 1)
    data = ObservationSeries(tuple(tracks), tuple(labels) if has_labels else None)
    return data, (states if has_states else None)


def config_hash(config: Dict[str, Any]) -> str:
    return hashlib.sha256(dumps(config).encode("utf-8")).hexdigest()


def package_versions() -> Dict[str, Optional[str]]:
    versions: Dict[str, Optional[str]] = {"python": platform.python_version()}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


def write_manifest(out_dir: PathLike, command: str, config: Dict[str, Any], seed: int,
                   outputs: List[str]) -> Dict[str, Any]:
    """写出运行清单manifest.json"""
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "seed": int(seed),
        "config": config,
        "config_sha256": config_hash(config),
        "versions": package_versions(),
        "outputs": sorted(outputs),
    }
    write_json(Path(out_dir) / "manifest.json", manifest)
    return manifest
