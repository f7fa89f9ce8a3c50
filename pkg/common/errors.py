#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
异常定义模块
所有库级异常都继承自HmmLabError，命令行入口据此生成结构化错误报告
"""

from typing import Any, Dict, List, Optional


class HmmLabError(Exception):
    """库级异常基类"""

    exit_code = 4

    def to_report(self) -> Dict[str, Any]:
        """转换为可序列化的错误报告"""
        return {"error": type(self).__name__, "message": str(self)}


class ConfigError(HmmLabError):
    """运行配置无法读取或不合法"""

    exit_code = 2


class InvalidParameterError(HmmLabError, ValueError):
    """分布或模型参数不合法（构造时检查）"""

    exit_code = 2


class DataError(HmmLabError, ValueError):
    """观测序列不合法：通道数不一致、轨迹过短或全部缺失等"""

    exit_code = 3


class MissingObservationError(DataError):
    """目标时刻的观测缺失"""


class ReducibleChainError(HmmLabError, ValueError):
    """转移概率矩阵不可约性检查失败，平稳分布不唯一"""


class IngestError(DataError):
    """
    轨迹文件读取失败

    参数:
        message: 错误描述
        line: 出错的行号（从1开始，含表头）
    """

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"第{line}行: {message}"
        super().__init__(message)

    def to_report(self) -> Dict[str, Any]:
        report = super().to_report()
        report["line"] = self.line
        return report


class FitFailedError(HmmLabError):
    """
    所有起点均未收敛

    参数:
        message: 错误描述
        starts: 每个起点的诊断记录
    """

    def __init__(self, message: str, starts: Optional[List[Any]] = None):
        super().__init__(message)
        self.starts = list(starts or [])

    def to_report(self) -> Dict[str, Any]:
        report = super().to_report()
        report["starts"] = [s.to_dict() if hasattr(s, "to_dict") else s for s in self.starts]
        return report
