"""核心统计量计算

自协方差、Bartlett 长程方差、CUSUM 轮廓、变点估计、分段统计量 M_n。
全部是纯函数，输入数组不会被修改，可以在多线程中并发调用。
"""
import logging
from typing import Callable, Optional

import numpy as np
from numpy.typing import ArrayLike, NDArray

from models.stats_models import (
    BandwidthRule,
    KernelWeights,
    LongRunVarianceEstimate,
    SplitTestResult,
)
from services.asymptotics import resolve_bandwidth
from services.exceptions import InvalidSeries, NegativeVariance, SegmentTooShort, ZeroVariance

logger = logging.getLogger(__name__)

Series = NDArray[np.float64]
KernelFactory = Callable[[int], KernelWeights]

# 负方差容差（相对 γ̂_0）以及零方差判定的相对尺度
NEGATIVE_TOLERANCE = 1e-12
ZERO_SCALE = 1e-12

# 半正定核：数值误差导致的微小负值截为 0
_PSD_KERNELS = {"bartlett", "parzen"}


def as_series(values: ArrayLike, *, min_length: int = 1) -> Series:
    """把输入转换为一维 float64 序列并检查有限性

    Args:
        values: 任意可转换为数组的观测值
        min_length: 最小长度

    Returns:
        只读的 float64 数组

    Raises:
        InvalidSeries: 非一维、过短或包含 NaN/inf
    """
    x = np.array(values, dtype=np.float64, copy=True)
    if x.ndim != 1:
        raise InvalidSeries(f"序列必须是一维的，实际维度: {x.ndim}")
    if x.size < min_length:
        raise InvalidSeries(f"序列长度 {x.size} 小于要求的 {min_length}")
    if not np.all(np.isfinite(x)):
        bad = int(np.flatnonzero(~np.isfinite(x))[0])
        raise InvalidSeries(f"序列包含非有限值，位置: {bad + 1}", details={"index": bad + 1})
    x.flags.writeable = False
    return x


def _deviations(x: Series) -> Series:
    """去均值；常数序列直接返回全零，避免舍入误差制造伪结构"""
    if x.max() == x.min():
        return np.zeros_like(x)
    return x - np.mean(x)


def sample_autocovariances(series: ArrayLike, max_lag: int) -> Series:
    """计算 γ̂_0..γ̂_max_lag（除数为 n，均值为全样本均值）"""
    x = as_series(series)
    n = x.size
    if not 0 <= max_lag <= n - 1:
        raise ValueError(f"滞后阶数 {max_lag} 超出范围 [0, {n - 1}]")
    dev = _deviations(x)
    gammas = np.empty(max_lag + 1)
    for j in range(max_lag + 1):
        gammas[j] = np.dot(dev[: n - j], dev[j:]) / n
    return gammas


def sample_autocovariance(series: ArrayLike, j: int) -> float:
    """样本自协方差 γ̂_j = (1/n) Σ_{i=1..n-j} (X_i - X̄)(X_{i+j} - X̄)

    Args:
        series: 观测序列
        j: 滞后阶数，0 ≤ j ≤ n-1

    Returns:
        γ̂_j

    Raises:
        ValueError: 滞后阶数越界
    """
    return float(sample_autocovariances(series, j)[j])


def bartlett_weights(q: int) -> KernelWeights:
    """Bartlett 权重 ω_j = 1 - j/(q+1)，j = 1..q"""
    if q < 0:
        raise ValueError(f"带宽必须非负: {q}")
    weights = tuple(1.0 - j / (q + 1) for j in range(1, q + 1))
    return KernelWeights(q=q, weights=weights, kernel_id="bartlett")


def parzen_weights(q: int) -> KernelWeights:
    """Parzen 权重（半正定，满足广义核约定）"""
    if q < 0:
        raise ValueError(f"带宽必须非负: {q}")
    weights = []
    for j in range(1, q + 1):
        x = j / (q + 1)
        if x <= 0.5:
            weights.append(1.0 - 6.0 * x**2 + 6.0 * x**3)
        else:
            weights.append(2.0 * (1.0 - x) ** 3)
    return KernelWeights(q=q, weights=tuple(weights), kernel_id="parzen")


KERNELS: dict[str, KernelFactory] = {
    "bartlett": bartlett_weights,
    "parzen": parzen_weights,
}


def kernel_factory(kernel_id: str) -> KernelFactory:
    """按名称取内置核"""
    try:
        return KERNELS[kernel_id]
    except KeyError:
        raise ValueError(f"未知的核: {kernel_id}，可选: {', '.join(KERNELS)}") from None


def long_run_variance(
    series: ArrayLike,
    q: int,
    kernel: Optional[KernelWeights] = None,
) -> LongRunVarianceEstimate:
    """长程方差估计 s² = γ̂_0 + 2 Σ_{j=1..q} ω_j(q) γ̂_j

    作用在前缀或后缀子序列上时，就是分段统计量里的 s_{n,1}² 和 s_{n,2}²
    （使用该段自己的均值和带宽）。

    Args:
        series: 观测序列，n ≥ 2
        q: 带宽，0 ≤ q ≤ n-1
        kernel: 核权重，默认 Bartlett

    Returns:
        LongRunVarianceEstimate

    Raises:
        ValueError: q 越界或核与 q 不一致
        NegativeVariance: 非半正定核给出明显为负的估计
    """
    x = as_series(series, min_length=2)
    n = x.size
    if not 0 <= q <= n - 1:
        raise ValueError(f"带宽 {q} 超出范围 [0, {n - 1}]")
    kernel = kernel or bartlett_weights(q)
    if kernel.q != q:
        raise ValueError(f"核权重的带宽 {kernel.q} 与 q={q} 不一致")

    gammas = sample_autocovariances(x, q)
    weights = np.asarray(kernel.weights, dtype=np.float64)
    value = float(gammas[0] + 2.0 * np.dot(weights, gammas[1:]))

    if value < 0.0:
        if value < -NEGATIVE_TOLERANCE * max(gammas[0], np.finfo(float).tiny):
            if kernel.kernel_id not in _PSD_KERNELS:
                raise NegativeVariance(
                    f"核 {kernel.kernel_id} 给出负的长程方差 {value:.6g}，该核不可用",
                    details={"value": value, "q": q},
                )
            logger.debug(f"半正定核出现数值负值 {value:.3g}，截为 0")
        value = 0.0
    return LongRunVarianceEstimate(value=value, q_used=q, kernel_id=kernel.kernel_id, n=n)


def _zero_floor(x: Series) -> float:
    """零方差判定阈值（标准差低于 1e-12 倍数据量级视为零）"""
    scale = float(np.max(np.abs(x)))
    return (ZERO_SCALE * scale) ** 2


def cusum_profile(series: ArrayLike) -> Series:
    """CUSUM 轮廓 D_k = |Σ_{i≤k} X_i - (k/n) Σ_{i≤n} X_i|，k = 1..n

    在去均值序列上累加，末项按构造严格为 0。
    """
    x = as_series(series)
    n = x.size
    partial = np.cumsum(_deviations(x))
    share = np.arange(1, n + 1, dtype=np.float64) / n
    return np.abs(partial - share * partial[-1])


def changepoint_estimator(series: ArrayLike) -> int:
    """变点估计 k̂：CUSUM 轮廓取最大值的最小下标（1 起始）

    从左到右保留第一个严格最大值，比较不带容差。
    """
    x = as_series(series, min_length=2)
    return int(np.argmax(cusum_profile(x))) + 1


def _self_normalized(x: Series, q: int, kernel: KernelFactory) -> tuple[float, float]:
    """返回 (T, s)：max D_k / (√n · s)"""
    estimate = long_run_variance(x, q, kernel(q))
    if estimate.value <= _zero_floor(x):
        raise ZeroVariance(
            f"长程方差为零（n={x.size}, q={q}），无法做自归一化",
            details={"n": int(x.size), "q": q},
        )
    s = float(np.sqrt(estimate.value))
    statistic = float(np.max(cusum_profile(x))) / (np.sqrt(x.size) * s)
    return statistic, s


def cusum_statistic(series: ArrayLike, q: int, kernel: KernelFactory = bartlett_weights) -> float:
    """CUSUM 统计量 T_n = max_k D_k / (√n · s_n)

    Args:
        series: 观测序列，n ≥ 2
        q: 长程方差带宽
        kernel: 核权重构造函数，默认 Bartlett

    Returns:
        T_n

    Raises:
        ZeroVariance: s_n² 在容差内为 0（例如常数序列）
    """
    x = as_series(series, min_length=2)
    statistic, _ = _self_normalized(x, q, kernel)
    return statistic


def _segment_bandwidth(length: int, rule: BandwidthRule, min_seg: int, side: str) -> int:
    """检查分段长度并返回该段带宽"""
    if length < max(min_seg, 2):
        raise SegmentTooShort(
            f"{side}段长度 {length} 小于最小分段长度 {min_seg}",
            details={"side": side, "length": length, "min_seg": min_seg},
        )
    choice = resolve_bandwidth(length, rule)
    if choice.clamped:
        raise SegmentTooShort(
            f"{side}段长度 {length} 不足以容纳带宽 q={choice.q}+2",
            details={"side": side, "length": length, "q": choice.q},
        )
    return choice.q


def split_statistics(
    series: ArrayLike,
    bandwidth: BandwidthRule,
    min_seg: int = 20,
    kernel: KernelFactory = bartlett_weights,
) -> SplitTestResult:
    """在 k̂ 处把序列分成两段，分别计算自归一化 CUSUM 统计量

    T_{n,1} 只用 X_1..X_k̂（带宽 q(k̂)），T_{n,2} 只用 X_{k̂+1}..X_n
    （带宽 q(n-k̂)），M_n = max(T_{n,1}, T_{n,2})。

    Args:
        series: 观测序列
        bandwidth: 带宽规则
        min_seg: 最小分段长度（且每段至少 q(段长)+2）
        kernel: 核权重构造函数

    Returns:
        SplitTestResult

    Raises:
        SegmentTooShort: 序列过短或 k̂ 离端点太近
        ZeroVariance: 任一段的长程方差为零
    """
    x = as_series(series, min_length=2)
    n = x.size
    if n < 2 * min_seg:
        raise SegmentTooShort(
            f"序列长度 {n} 小于 2×最小分段长度 {2 * min_seg}",
            details={"n": n, "min_seg": min_seg},
        )
    khat = changepoint_estimator(x)
    q1 = _segment_bandwidth(khat, bandwidth, min_seg, "前")
    q2 = _segment_bandwidth(n - khat, bandwidth, min_seg, "后")

    t1, s1 = _self_normalized(x[:khat], q1, kernel)
    t2, s2 = _self_normalized(x[khat:], q2, kernel)
    return SplitTestResult(
        n=n, khat=khat, t1=t1, t2=t2, s1=s1, s2=s2, mn=max(t1, t2), q1=q1, q2=q2
    )


def scaled_statistic(series: ArrayLike, q: int, H: float) -> float:
    """长程相依下的标准化统计量 (q/n)^{H-1/2} · T_n

    H = 1/2 时指数为 0，直接返回 T_n。

    Raises:
        ValueError: H 不在 [1/2, 1) 内
    """
    if not 0.5 <= H < 1.0:
        raise ValueError(f"H 必须在 [0.5, 1) 内: {H}")
    x = as_series(series, min_length=2)
    statistic = cusum_statistic(x, q)
    if H == 0.5:
        return statistic
    return float((q / x.size) ** (H - 0.5) * statistic)
