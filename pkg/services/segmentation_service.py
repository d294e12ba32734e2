"""多阶段二分分段

阶段 u 比较当前所有分段统计量的最大值 M̂_u 与 c(u)：
不超过则判为 u-1 个变点；超过则在统计量最大的可分段上按局部 k̂ 再分一次。
K+1 个阶段全部超过临界值时判为长程相依。
"""
import logging
from typing import Optional

import numpy as np
from numpy.typing import ArrayLike

from config import DEFAULT_ALPHA, DEFAULT_MIN_SEG
from models.segmentation_models import SegmentationResult, SegmentTest, StageRecord
from models.stats_models import BandwidthRule
from services.asymptotics import critical_value, resolve_bandwidth
from services.exceptions import SegmentTooShort, ZeroVariance
from services.stats_core import (
    KernelFactory,
    as_series,
    bartlett_weights,
    changepoint_estimator,
    cusum_statistic,
)

logger = logging.getLogger(__name__)


def _fits(length: int, rule: BandwidthRule, min_seg: int) -> bool:
    """长度足够计算统计量：≥ min_seg 且带宽不需要截断"""
    return length >= max(min_seg, 2) and not resolve_bandwidth(length, rule).clamped


def segment_test(
    series: ArrayLike,
    lo: int,
    hi: int,
    bandwidth: BandwidthRule,
    min_seg: int = DEFAULT_MIN_SEG,
    kernel: KernelFactory = bartlett_weights,
) -> SegmentTest:
    """计算 T(lo, hi) 与 k̂(lo, hi)，只使用 X_{lo+1}..X_{hi}

    Args:
        series: 完整序列
        lo, hi: 分段边界，0 ≤ lo < hi ≤ n
        bandwidth: 带宽规则，分段带宽为 q(hi - lo)
        min_seg: 最小分段长度
        kernel: 核权重构造函数

    Returns:
        SegmentTest，splittable 表示按 k̂ 分开后两段都足够长

    Raises:
        SegmentTooShort: 分段本身过短
        ZeroVariance: 分段长程方差为零
    """
    x = as_series(series, min_length=2)
    if not 0 <= lo < hi <= x.size:
        raise ValueError(f"分段边界非法: lo={lo}, hi={hi}, n={x.size}")
    length = hi - lo
    if not _fits(length, bandwidth, min_seg):
        raise SegmentTooShort(
            f"分段 ({lo}, {hi}] 长度 {length} 不足",
            details={"lo": lo, "hi": hi, "min_seg": min_seg},
        )
    segment = x[lo:hi]
    q = resolve_bandwidth(length, bandwidth).q
    t_stat = cusum_statistic(segment, q, kernel)
    k_local = changepoint_estimator(segment)
    splittable = (
        length >= 2 * min_seg
        and _fits(k_local, bandwidth, min_seg)
        and _fits(length - k_local, bandwidth, min_seg)
    )
    return SegmentTest(lo=lo, hi=hi, t_stat=t_stat, khat_local=lo + k_local, q=q, splittable=splittable)


def _child_test(
    x: np.ndarray,
    lo: int,
    hi: int,
    bandwidth: BandwidthRule,
    min_seg: int,
    kernel: KernelFactory,
) -> SegmentTest:
    """分出的子段；常数子段没有任何结构，记为统计量 0 的冻结分段"""
    try:
        return segment_test(x, lo, hi, bandwidth, min_seg, kernel)
    except ZeroVariance:
        logger.warning(f"分段 ({lo}, {hi}] 为常数，统计量记为 0")
        return SegmentTest(
            lo=lo,
            hi=hi,
            t_stat=0.0,
            khat_local=lo + changepoint_estimator(x[lo:hi]),
            q=resolve_bandwidth(hi - lo, bandwidth).q,
            splittable=False,
            degenerate=True,
        )


def multistage_classify(
    series: ArrayLike,
    max_changes: int,
    alpha: float = DEFAULT_ALPHA,
    bandwidth: Optional[BandwidthRule] = None,
    min_seg: int = DEFAULT_MIN_SEG,
    kernel: KernelFactory = bartlett_weights,
) -> SegmentationResult:
    """多阶段判定：弱相依加 m 个均值变点，或长程相依

    Args:
        series: 观测序列
        max_changes: 变点个数上限 K ≥ 1
        alpha: 各阶段共用的显著性水平
        bandwidth: 带宽规则
        min_seg: 最小分段长度
        kernel: 核权重构造函数

    Returns:
        SegmentationResult，trace 记录每个阶段的统计量、临界值与决策
    """
    if max_changes < 1:
        raise ValueError(f"max_changes 必须 ≥ 1: {max_changes}")
    bandwidth = bandwidth or BandwidthRule()
    x = as_series(series, min_length=2)
    n = x.size
    if n < (max_changes + 1) * min_seg:
        raise SegmentTooShort(
            f"序列长度 {n} 容纳不下 {max_changes + 1} 个长度为 {min_seg} 的分段",
            details={"n": n, "max_changes": max_changes, "min_seg": min_seg},
        )

    def finish(verdict: str, n_changes: Optional[int]) -> SegmentationResult:
        result = SegmentationResult(
            verdict=verdict,
            n_changes=n_changes,
            changepoints=sorted(changepoints),
            max_changes=max_changes,
            alpha=alpha,
            trace=trace,
        )
        logger.info(f"分段判定完成: {result.describe()}，变点 {result.changepoints}")
        return result

    changepoints: list[int] = []
    trace: list[StageRecord] = []

    try:
        segments = [segment_test(x, 0, n, bandwidth, min_seg, kernel)]
    except ZeroVariance:
        logger.warning("整段序列长程方差为零，视为没有任何结构")
        placeholder = SegmentTest(
            lo=0, hi=n, t_stat=0.0, khat_local=1, q=0, splittable=False, degenerate=True
        )
        trace.append(StageRecord(
            stage=1, statistic=0.0, critical_value=critical_value(1, alpha).value,
            decision="accept", segments=[placeholder], flag="degenerate",
        ))
        return finish("weakly_dependent", 0)

    for stage in range(1, max_changes + 2):
        statistic = max(s.t_stat for s in segments)
        c_u = critical_value(stage, alpha).value
        if statistic <= c_u:
            trace.append(StageRecord(
                stage=stage, statistic=statistic, critical_value=c_u,
                decision="accept", segments=list(segments),
            ))
            return finish("weakly_dependent", stage - 1)

        if stage == max_changes + 1:
            trace.append(StageRecord(
                stage=stage, statistic=statistic, critical_value=c_u,
                decision="reject", segments=list(segments), flag="max_changes_reached",
            ))
            return finish("long_range_dependent", None)

        candidates = [i for i, s in enumerate(segments) if s.splittable]
        if not candidates:
            logger.warning(f"阶段 {stage} 统计量 {statistic:.4f} > c({stage})，但没有可再分的分段")
            trace.append(StageRecord(
                stage=stage, statistic=statistic, critical_value=c_u,
                decision="reject", segments=list(segments), flag="exhausted_by_min_seg",
            ))
            return finish("long_range_dependent", None)

        # segments 按 lo 排序，max 取到的是最左边的并列最大值
        position = max(candidates, key=lambda i: segments[i].t_stat)
        target = segments[position]
        trace.append(StageRecord(
            stage=stage, statistic=statistic, critical_value=c_u,
            decision="reject", segments=list(segments), split=target,
        ))
        left = _child_test(x, target.lo, target.khat_local, bandwidth, min_seg, kernel)
        right = _child_test(x, target.khat_local, target.hi, bandwidth, min_seg, kernel)
        segments[position:position + 1] = [left, right]
        changepoints.append(target.khat_local)
        logger.debug(f"阶段 {stage}: 在 {target.khat_local} 处分段 ({target.lo}, {target.hi}]")

    # 循环在 stage = K+1 时必然返回
    raise AssertionError("unreachable")


class SegmentationService:
    """按固定配置执行多阶段判定"""

    def __init__(
        self,
        max_changes: int = 2,
        alpha: float = DEFAULT_ALPHA,
        bandwidth: Optional[BandwidthRule] = None,
        min_seg: int = DEFAULT_MIN_SEG,
        kernel: KernelFactory = bartlett_weights,
    ):
        if max_changes < 1:
            raise ValueError(f"max_changes 必须 ≥ 1: {max_changes}")
        self.max_changes = max_changes
        self.alpha = alpha
        self.bandwidth = bandwidth or BandwidthRule()
        self.min_seg = min_seg
        self.kernel = kernel

    def classify(self, series: ArrayLike) -> SegmentationResult:
        return multistage_classify(
            np.asarray(series, dtype=np.float64),
            self.max_changes,
            self.alpha,
            self.bandwidth,
            self.min_seg,
            self.kernel,
        )
