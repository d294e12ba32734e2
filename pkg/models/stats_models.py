"""统计量相关模型"""
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, computed_field, model_validator

KernelId = Literal["bartlett", "parzen", "custom"]


class KernelWeights(BaseModel):
    """核权重 ω_1..ω_q

    自定义核需满足：q → ∞ 时 ω_j(q) → 1（逐点），j > q 时 ω_j(q) = 0。
    这是文档约定，只对内置核做测试。
    """
    model_config = ConfigDict(frozen=True)

    q: int = Field(ge=0)
    weights: tuple[float, ...] = ()
    kernel_id: KernelId = "bartlett"

    @model_validator(mode="after")
    def _check_shape(self) -> "KernelWeights":
        if len(self.weights) != self.q:
            raise ValueError(f"权重个数 {len(self.weights)} 与带宽 q={self.q} 不一致")
        for j, w in enumerate(self.weights, start=1):
            if not 0.0 <= w <= 1.0:
                raise ValueError(f"权重 ω_{j}={w} 不在 [0, 1] 内")
        return self


class LongRunVarianceEstimate(BaseModel):
    """长程方差估计 s²"""
    model_config = ConfigDict(frozen=True)

    value: float
    q_used: int
    kernel_id: KernelId = "bartlett"
    n: int


class SplitTestResult(BaseModel):
    """在 k̂ 处分段后的检验结果，mn = max(t1, t2)"""
    model_config = ConfigDict(frozen=True)

    n: int
    khat: int
    t1: float = Field(ge=0)
    t2: float = Field(ge=0)
    s1: float = Field(ge=0)
    s2: float = Field(ge=0)
    mn: float = Field(ge=0)
    q1: int
    q2: int


class BandwidthRule(BaseModel):
    """带宽函数 q(n)

    - log10: q(n) = ⌊c·log10(n)⌋
    - power: q(n) = ⌊c·n^β⌋
    """
    model_config = ConfigDict(frozen=True)

    multiplier: float = Field(default=15.0, gt=0)
    form: Literal["log10", "power"] = "log10"
    beta: float = Field(default=0.5, gt=0, le=1)

    def describe(self) -> str:
        if self.form == "log10":
            return f"floor({self.multiplier:g}*log10(n))"
        return f"floor({self.multiplier:g}*n^{self.beta:g})"


class BandwidthChoice(BaseModel):
    """实际使用的带宽，clamped 表示被截到 n-2"""
    model_config = ConfigDict(frozen=True)

    n: int
    q: int
    clamped: bool = False


class BandwidthCheck(BaseModel):
    """单个带宽条件的检查结果"""
    condition: str
    passed: bool
    detail: str


class BandwidthReport(BaseModel):
    """带宽规则校验报告

    有限网格上的检查：通过只说明在该尺度上不矛盾，不是证明。
    """
    rule: BandwidthRule
    H: Optional[float] = None
    n_max: int
    grid: list[int]
    checks: list[BandwidthCheck]

    @computed_field  # type: ignore[prop-decorator]
    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


class CriticalValue(BaseModel):
    """多阶段临界值 c(u)：P(sup|B| ≤ c(u)) = (1 - α)^{1/u}"""
    model_config = ConfigDict(frozen=True)

    u: int = Field(ge=1)
    alpha: float = Field(gt=0, lt=1)
    value: float = Field(gt=0)


class BridgeSupDistribution(BaseModel):
    """sup_{0≤t≤1}|B(t)| 的分布（交错级数截断参数）"""
    model_config = ConfigDict(frozen=True)

    truncation_terms: int = Field(default=500, ge=1)
    tolerance: float = Field(default=1e-12, gt=0)
