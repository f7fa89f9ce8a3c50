#!/usr/bin/env python
# -*- coding: utf-8 -*-

"""
概率分布模块
提供HMM状态相关分布（发射分布）及情景生成所需分布的
密度、分布函数、分位数与抽样

所有分布均为不可变对象，参数在构造时检查，可在多个工作进程间共享
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, ClassVar, Dict, Optional, Tuple, Union

import numpy as np
from scipy import integrate, special, stats
from scipy.interpolate import BSpline

from common.errors import InvalidParameterError

# 设置日志
logger = logging.getLogger(__name__)

ArrayLike = Union[float, np.ndarray]

TWO_PI = 2.0 * math.pi
LOG_TWO_PI = math.log(TWO_PI)

# 向量化二分法迭代次数，足以把区间缩到双精度分辨率
_BISECT_ITERATIONS = 200


def _as_array(x: ArrayLike) -> np.ndarray:
    return np.asarray(x, dtype=float)


def _restore(x: ArrayLike, values: np.ndarray):
    """标量输入返回float，数组输入返回数组"""
    if np.ndim(x) == 0:
        return float(values)
    return values


def _check_positive(name: str, value: float) -> None:
    if not np.isfinite(value) or value <= 0:
        raise InvalidParameterError(f"{name}必须为正的有限实数，当前为{value}")


def _check_probabilities(p: ArrayLike) -> np.ndarray:
    p = _as_array(p)
    if np.any(~np.isfinite(p)) or np.any(p <= 0) or np.any(p >= 1):
        raise InvalidParameterError("分位数概率必须位于开区间(0, 1)内")
    return p


def wrap_angle(x: ArrayLike) -> ArrayLike:
    """把角度折返到(−π, π]"""
    values = math.pi - np.mod(math.pi - _as_array(x), TWO_PI)
    # np.mod可能舍入到2π
    values = np.where(values <= -math.pi, values + TWO_PI, values)
    return _restore(x, values)


def bisect_quantile(cdf: Callable[[np.ndarray], np.ndarray], p: np.ndarray,
                    lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """
    向量化二分法求分位数

    参数:
        cdf: 向量化分布函数
        p: 目标概率
        lo: 下界（满足cdf(lo) <= p）
        hi: 上界（满足cdf(hi) >= p）
    返回:
        满足cdf(q)≈p的q
    """
    lo = np.broadcast_to(np.asarray(lo, dtype=float), p.shape).copy()
    hi = np.broadcast_to(np.asarray(hi, dtype=float), p.shape).copy()
    for _ in range(_BISECT_ITERATIONS):
        mid = 0.5 * (lo + hi)
        below = cdf(mid) < p
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all((hi - lo) <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(hi))):
            break
    return 0.5 * (lo + hi)


class Distribution(ABC):
    """
    分布基类
    子类实现log_pdf/cdf/quantile/sample，并声明自由参数个数
    """

    family: ClassVar[str] = ""
    is_circular: ClassVar[bool] = False
    is_discrete: ClassVar[bool] = False

    @abstractmethod
    def log_pdf(self, x: ArrayLike) -> ArrayLike:
        """对数密度（离散分布为对数概率质量），支撑集外为−∞"""

    @abstractmethod
    def cdf(self, x: ArrayLike) -> ArrayLike:
        """分布函数 P(X <= x)"""

    @abstractmethod
    def quantile(self, p: ArrayLike) -> ArrayLike:
        """分位数函数，p必须位于(0, 1)"""

    @abstractmethod
    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> ArrayLike:
        """从给定随机流抽样"""

    @abstractmethod
    def free_parameter_count(self) -> int:
        """作为发射分布估计时的自由参数个数"""

    @abstractmethod
    def to_dict(self) -> Dict[str, Any]:
        """序列化为字典，字段与distribution_factory一致"""

    def pdf(self, x: ArrayLike) -> ArrayLike:
        return _restore(x, np.exp(_as_array(self.log_pdf(x))))

    def point_mass(self, x: ArrayLike) -> ArrayLike:
        """x处的原子概率，连续分布恒为0"""
        return _restore(x, np.zeros(np.shape(x)))

    def order_key(self) -> float:
        """状态排序（消除标签交换）使用的均值类参数"""
        return float("nan")


@dataclass(frozen=True)
class Gamma(Distribution):
    """
    伽马分布，均值/形状参数化：rate = shape / mean
    """

    mean: float
    shape: float

    family: ClassVar[str] = "gamma"

    def __post_init__(self):
        _check_positive("gamma均值", self.mean)
        _check_positive("gamma形状参数", self.shape)

    @property
    def rate(self) -> float:
        return self.shape / self.mean

    @property
    def scale(self) -> float:
        return self.mean / self.shape

    @classmethod
    def from_shape_rate(cls, shape: float, rate: float) -> "Gamma":
        _check_positive("gamma速率参数", rate)
        return cls(mean=shape / rate, shape=shape)

    def to_shape_rate(self) -> Tuple[float, float]:
        return self.shape, self.rate

    def log_pdf(self, x: ArrayLike) -> ArrayLike:
        xa = _as_array(x)
        k, rate = self.shape, self.rate
        with np.errstate(divide="ignore", invalid="ignore"):
            values = k * math.log(rate) - special.gammaln(k) + special.xlogy(k - 1.0, xa) - rate * xa
        values = np.where(xa < 0, -np.inf, values)
        if k < 1.0:
            values = np.where(xa == 0, np.inf, values)
        return _restore(x, values)

    def cdf(self, x: ArrayLike) -> ArrayLike:
        xa = _as_array(x)
        values = special.gammainc(self.shape, self.rate * np.maximum(xa, 0.0))
        return _restore(x, values)

    def quantile(self, p: ArrayLike) -> ArrayLike:
        pa = _check_probabilities(p)
        return _restore(p, special.gammaincinv(self.shape, pa) / self.rate)

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> ArrayLike:
        return rng.gamma(self.shape, self.scale, size=size)

    def free_parameter_count(self) -> int:
        return 2

    def order_key(self) -> float:
        return self.mean

    def to_dict(self) -> Dict[str, Any]:
        return {"family": self.family, "mean": self.mean, "shape": self.shape}


@dataclass(frozen=True)
class VonMises(Distribution):
    """
    冯·米塞斯圆周分布，支撑集(−π, π]
    """

    location: float
    concentration: float

    family: ClassVar[str] = "vonmises"
    is_circular: ClassVar[bool] = True

    def __post_init__(self):
        if not np.isfinite(self.location) or not (-math.pi < self.location <= math.pi):
            raise InvalidParameterError(f"von Mises位置参数必须位于(−π, π]，当前为{self.location}")
        if not np.isfinite(self.concentration) or self.concentration < 0:
            raise InvalidParameterError(f"von Mises集中度必须非负，当前为{self.concentration}")

    def _inside(self, xa: np.ndarray) -> np.ndarray:
        return (xa > -math.pi) & (xa <= math.pi)

    def log_pdf(self, x: ArrayLike) -> ArrayLike:
        xa = _as_array(x)
        kappa = self.concentration
        # i0e(κ) = exp(−κ)·I0(κ)
        values = kappa * (np.cos(xa - self.location) - 1.0) - LOG_TWO_PI - math.log(special.i0e(kappa))
        values = np.where(self._inside(xa), values, -np.inf)
        return _restore(x, values)

    def cdf(self, x: ArrayLike) -> ArrayLike:
        xa = np.clip(_as_array(x), -math.pi, math.pi)
        if self.concentration == 0:
            values = (xa + math.pi) / TWO_PI
        else:
            base = stats.vonmises.cdf(-math.pi, self.concentration, loc=self.location)
            values = stats.vonmises.cdf(xa, self.concentration, loc=self.location) - base
        return _restore(x, np.clip(values, 0.0, 1.0))

    def quantile(self, p: ArrayLike) -> ArrayLike:
        pa = _check_probabilities(p)
        if self.concentration == 0:
            return _restore(p, -math.pi + TWO_PI * pa)
        # scipy的分布函数每隔2π增加1，先把目标概率平移到以位置参数为中心的一周
        base = stats.vonmises.cdf(-math.pi, self.concentration, loc=self.location)
        target = np.mod(pa + base, 1.0)
        values = stats.vonmises.ppf(target, self.concentration, loc=self.location)
        return _restore(p, wrap_angle(values))

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> ArrayLike:
        # numpy的实现即Best–Fisher拒绝抽样
        draws = rng.vonmises(self.location, self.concentration, size=size)
        return wrap_angle(draws)

    def free_parameter_count(self) -> int:
        return 2

    def order_key(self) -> float:
        return self.location

    def to_dict(self) -> Dict[str, Any]:
        return {"family": self.family, "location": self.location, "concentration": self.concentration}


@dataclass(frozen=True)
class ZeroInflatedGamma(Distribution):
    """
    零膨胀伽马分布：0处点质量zero_mass，其余为均值/形状参数化的伽马
    """

    zero_mass: float
    mean: float
    shape: float

    family: ClassVar[str] = "zigamma"

    _gamma: Gamma = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not np.isfinite(self.zero_mass) or not (0.0 <= self.zero_mass < 1.0):
            raise InvalidParameterError(f"零点质量必须位于[0, 1)，当前为{self.zero_mass}")
        object.__setattr__(self, "_gamma", Gamma(self.mean, self.shape))

    @property
    def gamma(self) -> Gamma:
        return self._gamma

    def log_pdf(self, x: ArrayLike) -> ArrayLike:
        xa = _as_array(x)
        with np.errstate(divide="ignore"):
            log_zero = math.log(self.zero_mass) if self.zero_mass > 0 else -np.inf
            positive = math.log1p(-self.zero_mass) + _as_array(self._gamma.log_pdf(np.where(xa > 0, xa, 1.0)))
        values = np.where(xa > 0, positive, np.where(xa == 0, log_zero, -np.inf))
        return _restore(x, values)

    def cdf(self, x: ArrayLike) -> ArrayLike:
        xa = _as_array(x)
        values = self.zero_mass + (1.0 - self.zero_mass) * _as_array(self._gamma.cdf(xa))
        return _restore(x, np.where(xa < 0, 0.0, values))

    def quantile(self, p: ArrayLike) -> ArrayLike:
        pa = _check_probabilities(p)
        scaled = np.clip((pa - self.zero_mass) / (1.0 - self.zero_mass), np.finfo(float).tiny, 1 - 1e-16)
        values = np.where(pa <= self.zero_mass, 0.0, special.gammaincinv(self.shape, scaled) / self._gamma.rate)
        return _restore(p, values)

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> ArrayLike:
        draws = self._gamma.sample(rng, size)
        zeros = rng.random(size) < self.zero_mass
        return np.where(zeros, 0.0, draws) if size is not None else (0.0 if zeros else float(draws))

    def point_mass(self, x: ArrayLike) -> ArrayLike:
        xa = _as_array(x)
        return _restore(x, np.where(xa == 0, self.zero_mass, 0.0))

    def free_parameter_count(self) -> int:
        return 3

    def order_key(self) -> float:
        return self.mean

    def to_dict(self) -> Dict[str, Any]:
        return {"family": self.family, "zero_mass": self.zero_mass, "mean": self.mean, "shape": self.shape}


@dataclass(frozen=True)
class GammaMixture(Distribution):
    """
    伽马混合分布
    """

    weights: Tuple[float, ...]
    components: Tuple[Gamma, ...]

    family: ClassVar[str] = "gamma_mixture"

    def __post_init__(self):
        weights = tuple(float(w) for w in self.weights)
        components = tuple(self.components)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "components", components)
        if len(weights) != len(components) or not components:
            raise InvalidParameterError("混合权重与分量个数必须一致且非空")
        if any((not np.isfinite(w)) or w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-12:
            raise InvalidParameterError(f"混合权重必须非负且和为1，当前为{weights}")
        if not all(isinstance(c, Gamma) for c in components):
            raise InvalidParameterError("混合分量必须为Gamma")

    def log_pdf(self, x: ArrayLike) -> ArrayLike:
        xa = _as_array(x)
        with np.errstate(divide="ignore"):
            terms = np.stack([math.log(w) + _as_array(c.log_pdf(xa)) if w > 0 else np.full(xa.shape, -np.inf)
                              for w, c in zip(self.weights, self.components)])
        return _restore(x, special.logsumexp(terms, axis=0))

    def cdf(self, x: ArrayLike) -> ArrayLike:
        xa = _as_array(x)
        values = sum(w * _as_array(c.cdf(xa)) for w, c in zip(self.weights, self.components))
        return _restore(x, values)

    def quantile(self, p: ArrayLike) -> ArrayLike:
        pa = _check_probabilities(p)
        bounds = np.stack([_as_array(c.quantile(pa)) for c in self.components])
        values = bisect_quantile(lambda q: _as_array(self.cdf(q)), pa, bounds.min(axis=0), bounds.max(axis=0))
        return _restore(p, values)

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> ArrayLike:
        n = 1 if size is None else size
        labels = rng.choice(len(self.components), size=n, p=self.weights)
        shapes = np.array([c.shape for c in self.components])[labels]
        scales = np.array([c.scale for c in self.components])[labels]
        draws = rng.gamma(shapes, scales)
        return float(draws[0]) if size is None else draws

    def free_parameter_count(self) -> int:
        return 3 * len(self.components) - 1

    def order_key(self) -> float:
        return float(sum(w * c.mean for w, c in zip(self.weights, self.components)))

    def to_dict(self) -> Dict[str, Any]:
        return {"family": self.family, "weights": list(self.weights),
                "components": [c.to_dict() for c in self.components]}


@dataclass(frozen=True)
class SplineDensity(Distribution):
    """
    三次B样条密度
    knots为夹紧节点向量（首尾各重复4次），coefficients为非负系数，
    构造时按解析积分归一化
    """

    knots: Tuple[float, ...]
    coefficients: Tuple[float, ...]

    family: ClassVar[str] = "spline"
    degree: ClassVar[int] = 3

    _spline: BSpline = field(init=False, repr=False, compare=False)
    _antiderivative: BSpline = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        t = np.asarray(self.knots, dtype=float)
        c = np.asarray(self.coefficients, dtype=float)
        k = self.degree
        if len(t) != len(c) + k + 1:
            raise InvalidParameterError(f"节点数应为系数个数+{k + 1}，当前节点{len(t)}个、系数{len(c)}个")
        if np.any(np.diff(t) < 0) or t[-1] <= t[0]:
            raise InvalidParameterError("B样条节点必须单调不减")
        if np.any(t[: k + 1] != t[0]) or np.any(t[-(k + 1):] != t[-1]):
            raise InvalidParameterError("B样条节点向量必须在两端夹紧")
        if np.any(~np.isfinite(c)) or np.any(c < 0) or not np.any(c > 0):
            raise InvalidParameterError("B样条系数必须非负且不全为0")
        # ∫B_j = (t_{j+k+1} − t_j)/(k+1)
        total = float(np.sum(c * (t[k + 1:] - t[: len(c)]) / (k + 1)))
        c = c / total
        object.__setattr__(self, "knots", tuple(t))
        object.__setattr__(self, "coefficients", tuple(c))
        spline = BSpline(t, c, k, extrapolate=False)
        object.__setattr__(self, "_spline", spline)
        object.__setattr__(self, "_antiderivative", spline.antiderivative())

    @classmethod
    def from_table(cls, path: Union[str, Path]) -> "SplineDensity":
        """
        从文本表读取样条密度

        参数:
            path: 表文件路径，每行"节点 系数"，末尾4行系数为"-"；以#开头的行为注释
        返回:
            归一化后的SplineDensity
        """
        knots, coefficients = [], []
        with open(path, "r", encoding="utf-8") as handle:
            for line_no, raw in enumerate(handle, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                parts = line.split()
                if len(parts) != 2:
                    raise InvalidParameterError(f"{path}第{line_no}行应有两列")
                knots.append(float(parts[0]))
                if parts[1] != "-":
                    coefficients.append(float(parts[1]))
        logger.debug(f"读取样条密度表 {path}: {len(knots)}个节点, {len(coefficients)}个系数")
        return cls(tuple(knots), tuple(coefficients))

    @property
    def support(self) -> Tuple[float, float]:
        return self.knots[0], self.knots[-1]

    def density(self, x: ArrayLike) -> ArrayLike:
        xa = _as_array(x)
        values = np.nan_to_num(self._spline(xa), nan=0.0)
        return _restore(x, np.maximum(values, 0.0))

    def log_pdf(self, x: ArrayLike) -> ArrayLike:
        with np.errstate(divide="ignore"):
            values = np.log(_as_array(self.density(x)))
        return _restore(x, values)

    def cdf(self, x: ArrayLike) -> ArrayLike:
        lo, hi = self.support
        xa = np.clip(_as_array(x), lo, hi)
        values = self._antiderivative(xa) - self._antiderivative(lo)
        return _restore(x, np.clip(values, 0.0, 1.0))

    def quantile(self, p: ArrayLike) -> ArrayLike:
        pa = _check_probabilities(p)
        lo, hi = self.support
        values = bisect_quantile(lambda q: _as_array(self.cdf(q)), pa, lo, hi)
        return _restore(p, values)

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> ArrayLike:
        n = 1 if size is None else size
        u = rng.uniform(np.finfo(float).eps, 1.0 - np.finfo(float).eps, size=n)
        draws = _as_array(self.quantile(u))
        return float(draws[0]) if size is None else draws

    def free_parameter_count(self) -> int:
        raise InvalidParameterError("样条密度只用于数据生成，不可作为估计的发射分布")

    def order_key(self) -> float:
        t = np.asarray(self.knots)
        grid = np.linspace(t[0], t[-1], 4001)
        return float(integrate.trapezoid(grid * _as_array(self.density(grid)), grid))

    def to_dict(self) -> Dict[str, Any]:
        return {"family": self.family, "knots": list(self.knots), "coefficients": list(self.coefficients)}


@dataclass(frozen=True)
class LogNormal(Distribution):
    """对数正态分布（情景4个体异质性）"""

    log_mean: float
    log_sd: float

    family: ClassVar[str] = "lognormal"

    def __post_init__(self):
        if not np.isfinite(self.log_mean):
            raise InvalidParameterError("对数均值必须有限")
        _check_positive("对数标准差", self.log_sd)

    def log_pdf(self, x: ArrayLike) -> ArrayLike:
        xa = _as_array(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            z = (np.log(xa) - self.log_mean) / self.log_sd
            values = -np.log(xa) - math.log(self.log_sd) - 0.5 * LOG_TWO_PI - 0.5 * z * z
        return _restore(x, np.where(xa > 0, values, -np.inf))

    def cdf(self, x: ArrayLike) -> ArrayLike:
        xa = _as_array(x)
        with np.errstate(divide="ignore"):
            values = special.ndtr((np.log(np.maximum(xa, 0.0)) - self.log_mean) / self.log_sd)
        return _restore(x, values)

    def quantile(self, p: ArrayLike) -> ArrayLike:
        pa = _check_probabilities(p)
        return _restore(p, np.exp(self.log_mean + self.log_sd * special.ndtri(pa)))

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> ArrayLike:
        return rng.lognormal(self.log_mean, self.log_sd, size=size)

    def free_parameter_count(self) -> int:
        return 2

    def order_key(self) -> float:
        return math.exp(self.log_mean + 0.5 * self.log_sd ** 2)

    def to_dict(self) -> Dict[str, Any]:
        return {"family": self.family, "log_mean": self.log_mean, "log_sd": self.log_sd}


@dataclass(frozen=True)
class PoissonDwell(Distribution):
    """
    支撑集为{1,2,...}的泊松型停留时间分布

    mode="shift"时为1 + Poisson(mean − 1)（均值恰为mean）；
    mode="truncate"时为速率mean的零截断泊松
    """

    mean: float
    mode: str = "shift"

    family: ClassVar[str] = "poisson_dwell"
    is_discrete: ClassVar[bool] = True

    def __post_init__(self):
        if not np.isfinite(self.mean) or self.mean <= 1:
            raise InvalidParameterError(f"停留时间均值必须大于1，当前为{self.mean}")
        if self.mode not in ("shift", "truncate"):
            raise InvalidParameterError(f"未知的停留时间模式: {self.mode}")

    def _is_integer_support(self, xa: np.ndarray) -> np.ndarray:
        return (xa >= 1) & (np.floor(xa) == xa)

    def log_pdf(self, x: ArrayLike) -> ArrayLike:
        xa = _as_array(x)
        valid = self._is_integer_support(xa)
        k = np.where(valid, xa, 1.0)
        if self.mode == "shift":
            values = stats.poisson.logpmf(k - 1, self.mean - 1)
        else:
            values = stats.poisson.logpmf(k, self.mean) - math.log(-math.expm1(-self.mean))
        return _restore(x, np.where(valid, values, -np.inf))

    def cdf(self, x: ArrayLike) -> ArrayLike:
        xa = np.floor(_as_array(x))
        if self.mode == "shift":
            values = stats.poisson.cdf(xa - 1, self.mean - 1)
        else:
            p0 = math.exp(-self.mean)
            values = (stats.poisson.cdf(xa, self.mean) - p0) / (1.0 - p0)
        return _restore(x, np.where(xa < 1, 0.0, np.clip(values, 0.0, 1.0)))

    def quantile(self, p: ArrayLike) -> ArrayLike:
        pa = _check_probabilities(p)
        if self.mode == "shift":
            values = 1.0 + stats.poisson.ppf(pa, self.mean - 1)
        else:
            p0 = math.exp(-self.mean)
            values = np.maximum(stats.poisson.ppf(p0 + pa * (1.0 - p0), self.mean), 1.0)
        return _restore(p, values)

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> ArrayLike:
        if self.mode == "shift":
            return 1 + rng.poisson(self.mean - 1, size=size)
        n = 1 if size is None else size
        draws = np.empty(n, dtype=np.int64)
        filled = 0
        while filled < n:
            batch = rng.poisson(self.mean, size=n - filled)
            batch = batch[batch >= 1]
            draws[filled: filled + len(batch)] = batch
            filled += len(batch)
        return int(draws[0]) if size is None else draws

    def point_mass(self, x: ArrayLike) -> ArrayLike:
        return self.pdf(x)

    def free_parameter_count(self) -> int:
        return 1

    def order_key(self) -> float:
        if self.mode == "shift":
            return self.mean
        return self.mean / (1.0 - math.exp(-self.mean))

    def to_dict(self) -> Dict[str, Any]:
        return {"family": self.family, "mean": self.mean, "mode": self.mode}


@dataclass(frozen=True)
class Uniform(Distribution):
    """区间[lo, hi]上的均匀分布（情景1离群误差）"""

    lo: float
    hi: float

    family: ClassVar[str] = "uniform"

    def __post_init__(self):
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or self.hi <= self.lo:
            raise InvalidParameterError(f"均匀分布要求有限的lo < hi，当前为[{self.lo}, {self.hi}]")

    def log_pdf(self, x: ArrayLike) -> ArrayLike:
        xa = _as_array(x)
        inside = (xa >= self.lo) & (xa <= self.hi)
        return _restore(x, np.where(inside, -math.log(self.hi - self.lo), -np.inf))

    def cdf(self, x: ArrayLike) -> ArrayLike:
        xa = _as_array(x)
        return _restore(x, np.clip((xa - self.lo) / (self.hi - self.lo), 0.0, 1.0))

    def quantile(self, p: ArrayLike) -> ArrayLike:
        pa = _check_probabilities(p)
        return _restore(p, self.lo + pa * (self.hi - self.lo))

    def sample(self, rng: np.random.Generator, size: Optional[int] = None) -> ArrayLike:
        return rng.uniform(self.lo, self.hi, size=size)

    def free_parameter_count(self) -> int:
        return 2

    def order_key(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def to_dict(self) -> Dict[str, Any]:
        return {"family": self.family, "lo": self.lo, "hi": self.hi}


# ==================== 函数式接口 ====================

def log_pdf(d: Distribution, x: ArrayLike) -> ArrayLike:
    """对数密度或对数概率质量"""
    return d.log_pdf(x)


def cdf(d: Distribution, x: ArrayLike) -> ArrayLike:
    """分布函数"""
    return d.cdf(x)


def quantile(d: Distribution, p: ArrayLike) -> ArrayLike:
    """分位数函数"""
    return d.quantile(p)


def sample(d: Distribution, rng: np.random.Generator, size: Optional[int] = None) -> ArrayLike:
    """抽样"""
    return d.sample(rng, size)


def point_mass(d: Distribution, x: ArrayLike) -> ArrayLike:
    """x处的原子概率"""
    return d.point_mass(x)


def free_parameter_count(d: Distribution) -> int:
    """作为发射分布估计时的自由参数个数"""
    return d.free_parameter_count()
