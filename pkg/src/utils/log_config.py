#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
日志配置模块
"""

import logging
from typing import Optional

from src.config.settings import LOG_CONFIG


def setup_logging(level: str = LOG_CONFIG['level'], log_file: Optional[str] = LOG_CONFIG['log_file'],
                  quiet: bool = False) -> None:
    """
    配置根日志器

    参数:
        level: 日志级别
        log_file: 日志文件路径，None时只输出到控制台
        quiet: 控制台只输出警告及以上
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    formatter = logging.Formatter(LOG_CONFIG['format'])

    console = logging.StreamHandler()
    console.setLevel(logging.WARNING if quiet else getattr(logging, level.upper(), logging.INFO))
    console.setFormatter(formatter)
    root.addHandler(console)

    if log_file:
        file_handler = logging.FileHandler(log_file, encoding="utf-8")
        file_handler.setLevel(getattr(logging, level.upper(), logging.INFO))
        file_handler.setFormatter(formatter)
        root.addHandler(file_handler)

    root.setLevel(getattr(logging, level.upper(), logging.INFO))
    # numba编译日志过于冗长
    logging.getLogger("numba").setLevel(logging.WARNING)


def worker_initializer(level: str = LOG_CONFIG['level'], quiet: bool = False) -> None:
    """进程池初始化：子进程只输出到控制台，不写日志文件"""
    setup_logging(level=level, log_file=None, quiet=quiet)


def current_settings() -> dict:
    """当前根日志器的级别，供子进程沿用"""
    root = logging.getLogger()
    quiet = any(isinstance(h, logging.StreamHandler) and not isinstance(h, logging.FileHandler)
                and h.level >= logging.WARNING for h in root.handlers)
    return {"level": logging.getLevelName(root.level), "quiet": quiet}
