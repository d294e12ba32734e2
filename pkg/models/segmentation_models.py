"""多阶段二分分段相关模型"""
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field


class SegmentTest(BaseModel):
    """X_{lo+1}..X_{hi} 上的 CUSUM 检验 T(lo, hi) 与局部变点 k̂(lo, hi)（绝对下标）"""
    model_config = ConfigDict(frozen=True)

    lo: int = Field(ge=0)
    hi: int
    t_stat: float = Field(ge=0)
    khat_local: int
    q: int
    splittable: bool = True
    # 分段为常数，长程方差为零，统计量记为 0 且不再细分
    degenerate: bool = False


class StageRecord(BaseModel):
    """一个阶段的判定记录：阶段 u 的统计量 M̂_u 与 c(u) 比较"""
    stage: int = Field(ge=1)
    statistic: float
    critical_value: float
    decision: Literal["accept", "reject"]
    segments: list[SegmentTest]
    split: Optional[SegmentTest] = None
    flag: Optional[Literal["degenerate", "exhausted_by_min_seg", "max_changes_reached"]] = None


class SegmentationResult(BaseModel):
    """多阶段判定结果

    verdict = long_range_dependent 当且仅当最后一个阶段的统计量超过临界值。
    """
    verdict: Literal["weakly_dependent", "long_range_dependent"]
    n_changes: Optional[int] = None
    changepoints: list[int] = Field(default_factory=list)
    max_changes: int
    alpha: float
    trace: list[StageRecord] = Field(default_factory=list)

    def describe(self) -> str:
        if self.verdict == "long_range_dependent":
            return "long-range dependent"
        return f"{self.n_changes} change-point(s)"
