"""极限分布与带宽规则

布朗桥上确界 sup|B(t)| 的分布函数、分位数、多阶段临界值 c(u)，
以及带宽函数 q(n) 的取值与有限网格校验。
"""
import logging
import math
from functools import lru_cache
from typing import Optional

from scipy.optimize import brentq

from models.stats_models import (
    BandwidthCheck,
    BandwidthChoice,
    BandwidthReport,
    BandwidthRule,
    BridgeSupDistribution,
    CriticalValue,
)

logger = logging.getLogger(__name__)

DEFAULT_DISTRIBUTION = BridgeSupDistribution()

# x 小于该值时 CDF < 1e-12，直接返回 0
_CDF_ZERO_BELOW = 0.05
_QUANTILE_BRACKET = (0.2, 4.0)


def bridge_sup_cdf(x: float, distribution: BridgeSupDistribution = DEFAULT_DISTRIBUTION) -> float:
    """P(sup_{0≤t≤1}|B(t)| ≤ x) = 1 + 2 Σ_{k≥1} (-1)^k exp(-2k²x²)

    Args:
        x: 非负实数
        distribution: 截断参数（最大项数、项的容差）

    Returns:
        [0, 1] 内的概率

    Raises:
        ValueError: x 为负
    """
    if x < 0 or math.isnan(x):
        raise ValueError(f"x 必须非负: {x}")
    if x < _CDF_ZERO_BELOW:
        return 0.0
    total = 1.0
    for k in range(1, distribution.truncation_terms + 1):
        term = math.exp(-2.0 * k * k * x * x)
        if term < distribution.tolerance:
            break
        total += 2.0 * term if k % 2 == 0 else -2.0 * term
    return min(1.0, max(0.0, total))


def bridge_sup_quantile(p: float, distribution: BridgeSupDistribution = DEFAULT_DISTRIBUTION) -> float:
    """bridge_sup_cdf 的数值逆

    先在 [0.2, 4] 上找根，p 落在区间外时扩大区间。
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"概率必须在 (0, 1) 内: {p}")
    lo, hi = _QUANTILE_BRACKET
    if bridge_sup_cdf(lo, distribution) >= p:
        lo = _CDF_ZERO_BELOW
    while bridge_sup_cdf(hi, distribution) <= p:
        hi *= 2.0
        if hi > 64.0:
            raise ValueError(f"概率 {p} 过于接近 1，无法求分位数")
    return float(brentq(lambda x: bridge_sup_cdf(x, distribution) - p, lo, hi, xtol=1e-13, rtol=1e-14))


@lru_cache(maxsize=256)
def _critical_value(u: int, alpha: float) -> float:
    # u = 1 时 (1-α)^{1/1} 就是 1-α，保证与分位数定义完全一致
    p = 1.0 - alpha if u == 1 else (1.0 - alpha) ** (1.0 / u)
    return bridge_sup_quantile(p)


def critical_value(u: int, alpha: float) -> CriticalValue:
    """多阶段临界值 c(u)

    P(max_{i≤u} sup|B^{(i)}| > c(u)) = α，B^{(i)} 为独立布朗桥。

    Args:
        u: 独立布朗桥个数，u ≥ 1
        alpha: 显著性水平，0 < α < 1

    Returns:
        CriticalValue
    """
    if u < 1:
        raise ValueError(f"u 必须 ≥ 1: {u}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"α 必须在 (0, 1) 内: {alpha}")
    return CriticalValue(u=u, alpha=alpha, value=_critical_value(u, float(alpha)))


def _rule_value(n: float, rule: BandwidthRule) -> float:
    if rule.form == "log10":
        return rule.multiplier * math.log10(n)
    return rule.multiplier * float(n) ** rule.beta


def raw_bandwidth(n: float, rule: BandwidthRule) -> int:
    """未截断的 q(n)，至少为 1"""
    value = _rule_value(n, rule)
    # 1e-9 吸收 log10 在整数点上的舍入
    return max(1, math.floor(value + 1e-9))


def resolve_bandwidth(n: int, rule: BandwidthRule) -> BandwidthChoice:
    """q(n) 及是否被截到 n-2"""
    if n < 2:
        raise ValueError(f"n 必须 ≥ 2: {n}")
    q = raw_bandwidth(n, rule)
    if q > n - 2:
        return BandwidthChoice(n=n, q=n - 2, clamped=True)
    return BandwidthChoice(n=n, q=q, clamped=False)


def default_bandwidth(n: int, rule: Optional[BandwidthRule] = None) -> int:
    """带宽 q(n)，默认 ⌊15·log10(n)⌋，不超过 n-2

    Args:
        n: 样本量，n ≥ 2
        rule: 带宽规则

    Returns:
        整数带宽
    """
    choice = resolve_bandwidth(n, rule or BandwidthRule())
    if choice.clamped:
        logger.debug(f"带宽被截断: n={n}, q={choice.q}")
    return choice.q


def _doubling_grid(n_max: int) -> list[int]:
    grid = []
    n = 4
    while n <= n_max:
        grid.append(n)
        n *= 2
    return grid


def _eventually_nonincreasing(values: list[float]) -> tuple[bool, int]:
    """最大值之后单调不增，且最大值不在网格末端"""
    peak = max(range(len(values)), key=lambda i: values[i])
    tail = values[peak:]
    ok = peak < len(values) - 1 and all(b <= a + 1e-12 * abs(a) for a, b in zip(tail, tail[1:]))
    return ok, peak


def validate_bandwidth_rule(
    rule: BandwidthRule,
    H: Optional[float] = None,
    n_max: int = 2**40,
) -> BandwidthReport:
    """在倍增网格 n = 4, 8, ..., ≤ n_max 上检查带宽条件

    - 单调不减
    - 倍增有界：q(2n)/q(n) ≤ 4
    - q(n)(log n)^4 / n 最终单调不增
    - 给定 H 时：q(n)(log n)^{7/(4-4H)} / n 最终单调不增

    这些是渐近条件的有限网格版本，通过只是必要条件。
    """
    if n_max < 4:
        raise ValueError(f"n_max 必须 ≥ 4: {n_max}")
    if H is not None and not 0.5 < H < 1.0:
        raise ValueError(f"H 必须在 (0.5, 1) 内: {H}")

    grid = _doubling_grid(n_max)
    q = [raw_bandwidth(n, rule) for n in grid]
    # 增长条件按取整前的连续值计算
    smooth = [max(1.0, _rule_value(n, rule)) for n in grid]
    checks: list[BandwidthCheck] = []

    decreasing = [grid[i + 1] for i in range(len(q) - 1) if q[i + 1] < q[i]]
    checks.append(BandwidthCheck(
        condition="nondecreasing",
        passed=not decreasing,
        detail="q 单调不减" if not decreasing else f"在 n={decreasing[0]} 处下降",
    ))

    ratios = [q[i + 1] / q[i] for i in range(len(q) - 1)]
    worst = max(ratios) if ratios else 1.0
    checks.append(BandwidthCheck(
        condition="doubling_bounded",
        passed=worst <= 4.0,
        detail=f"max q(2n)/q(n) = {worst:.4g}",
    ))

    if len(grid) >= 3:
        growth = [qn * math.log(n) ** 4 / n for qn, n in zip(smooth, grid)]
        ok, peak = _eventually_nonincreasing(growth)
        checks.append(BandwidthCheck(
            condition="log4_growth",
            passed=ok,
            detail=f"q(n)(log n)^4/n 峰值在 n={grid[peak]}",
        ))
        if H is not None:
            exponent = 7.0 / (4.0 - 4.0 * H)
            # 取对数比较，避免 (log n)^{大指数} 溢出
            log_ratio = [math.log(qn) + exponent * math.log(math.log(n)) - math.log(n) for qn, n in zip(smooth, grid)]
            ok, peak = _eventually_nonincreasing(log_ratio)
            checks.append(BandwidthCheck(
                condition="lrd_growth",
                passed=ok,
                detail=f"q(n)(log n)^{exponent:.3g}/n 峰值在 n={grid[peak]}",
            ))
    else:
        logger.warning(f"n_max={n_max} 网格点太少，跳过增长条件检查")

    report = BandwidthReport(rule=rule, H=H, n_max=n_max, grid=grid, checks=checks)
    logger.info(f"带宽规则 {rule.describe()} 校验完成: {'通过' if report.passed else '未通过'}")
    return report
