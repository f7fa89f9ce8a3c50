#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
资源监控模块
记录进程内存占用，并给出默认工作进程数
"""

import logging
import os
from typing import Dict, Optional

import psutil

# 设置日志
logger = logging.getLogger(__name__)


def default_workers() -> int:
    """默认工作进程数：物理核心数（取不到时用逻辑核心数）"""
    count = psutil.cpu_count(logical=False) or psutil.cpu_count(logical=True) or 1
    return max(1, int(count))


def resolve_workers(requested: Optional[int]) -> int:
    """把配置中的工作进程数解析为正整数"""
    if requested is None or requested <= 0:
        return default_workers()
    return int(requested)


def snapshot() -> Dict[str, float]:
    """当前进程的内存与CPU信息"""
    process = psutil.Process(os.getpid())
    memory = process.memory_info()
    return {
        "rss_mb": memory.rss / 1024 / 1024,
        "vms_mb": memory.vms / 1024 / 1024,
        "system_percent": psutil.virtual_memory().percent,
        "cpu_count": psutil.cpu_count(logical=True) or 1,
    }


def log_snapshot(tag: str) -> None:
    """把资源快照写入日志"""
    info = snapshot()
    logger.info(f"[{tag}] 内存: RSS {info['rss_mb']:.1f} MB, 系统占用 {info['system_percent']:.1f}%, "
                f"CPU {info['cpu_count']}")
