"""Monte Carlo 实验相关模型"""
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from config import DEFAULT_FGN_CAP, DEFAULT_MIN_SEG
from models.process_models import AnySpec, ProcessSpec
from models.stats_models import BandwidthRule


class McConfig(BaseModel):
    """拒绝率实验配置"""
    model_config = ConfigDict(extra="forbid")

    replications: int = Field(ge=1)
    n: int = Field(ge=4)
    alphas: list[float] = Field(default_factory=lambda: [0.10, 0.05, 0.01], min_length=1)
    process: AnySpec
    bandwidth: BandwidthRule = Field(default_factory=BandwidthRule)
    master_seed: int = Field(default=0, ge=0, lt=2**64)
    observable: Literal["level", "square"] = "level"
    statistic: Literal["split", "cusum"] = "split"
    min_seg: int = Field(default=DEFAULT_MIN_SEG, ge=2)
    workers: int = Field(default=1, ge=1)
    fgn_cap: int = Field(default=DEFAULT_FGN_CAP, ge=2)
    keep_raw: bool = False

    @field_validator("alphas")
    @classmethod
    def _check_alphas(cls, alphas: list[float]) -> list[float]:
        for alpha in alphas:
            if not 0.0 < alpha < 1.0:
                raise ValueError(f"α 必须在 (0, 1) 内: {alpha}")
        return alphas


class MedianSummary(BaseModel):
    """中位数及其 bootstrap 四分位区间"""
    median: float
    iqr_low: float
    iqr_high: float
    count: int


class RejectionRow(BaseModel):
    alpha: float
    critical_value: float
    rejections: int
    fraction: float = Field(ge=0, le=1)
    standard_error: float = Field(ge=0)


class RejectionTable(BaseModel):
    """各显著性水平下的拒绝比例，标准误 √(p(1-p)/R)"""
    rows: list[RejectionRow]
    n: int
    replications: int
    master_seed: int
    statistic: Literal["split", "cusum"]
    observable: Literal["level", "square"]
    critical_u: int
    completed: int
    failures: int
    failure_rate: float
    failure_kinds: dict[str, int] = Field(default_factory=dict)
    statistic_median: Optional[MedianSummary] = None
    metadata: dict = Field(default_factory=dict)
    raw_statistics: Optional[list[float]] = None

    def row(self, alpha: float) -> RejectionRow:
        for row in self.rows:
            if abs(row.alpha - alpha) < 1e-12:
                return row
        raise KeyError(alpha)


class ConsistencyRow(BaseModel):
    n: int
    q: int
    s2: MedianSummary
    scaled: MedianSummary
    relative_error: float


class ConsistencyReport(BaseModel):
    """Bartlett 估计的一致性（弱相依收敛到 σ²，长程相依按 q^{1-2H} 缩放后收敛到 c_H²）"""
    regime: Literal["weak", "lrd"]
    process_kind: str
    target: float
    H: Optional[float] = None
    c0: Optional[float] = None
    rows: list[ConsistencyRow]
    failures: int = 0


class LimitFunctionalSample(BaseModel):
    """极限向量的一次抽样：ξ 为 |B_H| 的首个最大值位置，v1、v2 为两段归一化上确界"""
    model_config = ConfigDict(frozen=True)

    xi: float = Field(ge=0, le=1)
    v1: float = Field(ge=0)
    v2: float = Field(ge=0)
    boundary_hit: bool = False


class DivergenceReport(BaseModel):
    """M_n 与 T_n 中位数随样本量的变化"""
    mode: Literal["lrd", "changepoint", "null"]
    process_kind: str
    n_small: int
    n_large: int
    replications: int
    mn_small: Optional[MedianSummary] = None
    mn_large: Optional[MedianSummary] = None
    tn_small: MedianSummary
    tn_large: MedianSummary
    tn_ratio: float
    expected_ratio: Optional[float] = None
    failures: int = 0
    failure_rate: float = 0.0
    passed: bool


class ConsistencyConfig(BaseModel):
    """Bartlett 一致性实验配置"""
    model_config = ConfigDict(extra="forbid")

    process: ProcessSpec
    n_grid: list[int] = Field(min_length=1)
    bandwidth: BandwidthRule = Field(default_factory=BandwidthRule)
    replications: int = Field(default=100, ge=1)
    master_seed: int = Field(default=0, ge=0, lt=2**64)


class DivergenceConfig(BaseModel):
    """发散性检查配置"""
    model_config = ConfigDict(extra="forbid")

    process: AnySpec
    n_small: int = Field(ge=4)
    n_large: int = Field(ge=4)
    replications: int = Field(default=100, ge=1)
    master_seed: int = Field(default=0, ge=0, lt=2**64)
    bandwidth: BandwidthRule = Field(default_factory=BandwidthRule)
    min_seg: int = Field(default=DEFAULT_MIN_SEG, ge=2)

    @model_validator(mode="after")
    def _check_sizes(self) -> "DivergenceConfig":
        if self.n_small >= self.n_large:
            raise ValueError(f"需要 n_small < n_large: {self.n_small}, {self.n_large}")
        return self


class LimitConfig(BaseModel):
    """极限泛函抽样配置"""
    model_config = ConfigDict(extra="forbid")

    H: float = Field(ge=0.5, lt=1.0)
    grid_n: int = Field(default=2048, ge=2)
    replications: int = Field(default=1000, ge=1)
    master_seed: int = Field(default=0, ge=0, lt=2**64)
    keep_raw: bool = False


class LimitFunctionalReport(BaseModel):
    """极限泛函样本的汇总：ξ 的均值、边界命中次数、v1/v2 的十分位数"""
    H: float
    grid_n: int
    replications: int
    master_seed: int
    mean_xi: float
    boundary_hits: int
    v1_deciles: list[float]
    v2_deciles: list[float]
    samples: Optional[list[LimitFunctionalSample]] = None
