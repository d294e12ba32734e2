"""数据管道与报告模型"""
from typing import Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from config import REPORT_SCHEMA_VERSION, TOOL_VERSION
from models.segmentation_models import SegmentationResult
from models.stats_models import BandwidthRule, CriticalValue, SplitTestResult

Transform = Literal["log_returns_pct", "simple_returns_pct", "demean", "square"]
RETURNS_TRANSFORMS = ("log_returns_pct", "simple_returns_pct")


class Pipeline(BaseModel):
    """读入序列后的变换链，按顺序执行

    例如 prices → log_returns_pct → demean → square。
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    input_kind: Literal["levels", "prices"] = "levels"
    transforms: tuple[Transform, ...] = ()
    column: Optional[Union[int, str]] = None
    header: Literal["auto", "yes", "no"] = "auto"

    @model_validator(mode="after")
    def _check_order(self) -> "Pipeline":
        if self.input_kind == "prices" and "square" in self.transforms:
            first_square = self.transforms.index("square")
            earlier = self.transforms[:first_square]
            if not any(t in RETURNS_TRANSFORMS or t == "demean" for t in earlier):
                raise ValueError("价格序列必须先做收益率或去均值变换，才能平方")
        return self

    @classmethod
    def parse(cls, text: str, column: Optional[Union[int, str]] = None,
              header: Literal["auto", "yes", "no"] = "auto") -> "Pipeline":
        """解析命令行写法，如 "prices,log_returns_pct,demean,square"

        第一个元素可以是 levels 或 prices，省略时为 levels。
        """
        steps = [s.strip() for s in text.replace("→", ",").replace(">", ",").split(",") if s.strip()]
        input_kind = "levels"
        if steps and steps[0] in ("levels", "prices"):
            input_kind = steps.pop(0)
        return cls(input_kind=input_kind, transforms=tuple(steps), column=column, header=header)

    def describe(self) -> str:
        return "→".join((self.input_kind, *self.transforms))


class Report(BaseModel):
    """检验或分段的报告

    记录了全部输入参数，用同样的输入重跑可以逐位复现统计量。
    """
    schema_version: int = REPORT_SCHEMA_VERSION
    tool_version: str = TOOL_VERSION
    command: Literal["test", "segment"]
    source: str
    n: int
    pipeline: Pipeline
    pipeline_chain: str
    bandwidth: BandwidthRule
    min_seg: int
    alpha: float
    bandwidths: dict[str, int] = Field(default_factory=dict)
    split: Optional[SplitTestResult] = None
    critical_values: list[CriticalValue] = Field(default_factory=list)
    verdict: str
    summary: str
    segmentation: Optional[SegmentationResult] = None
    seed: Optional[int] = None


class AcfRow(BaseModel):
    lag: int
    autocorrelation: float


class PeriodogramRow(BaseModel):
    index: int
    frequency: float
    periodogram: float
    smoothed: float
    log10_frequency: float
    log10_periodogram: Optional[float] = None
    log10_smoothed: Optional[float] = None


class DiagnosticsTable(BaseModel):
    """样本自相关和低频周期图，可直接用于作图"""
    schema_version: int = REPORT_SCHEMA_VERSION
    tool_version: str = TOOL_VERSION
    source: str
    n: int
    pipeline_chain: str
    max_lag: int
    smoothing_window: int
    degenerate: bool = False
    acf: list[AcfRow]
    periodogram: list[PeriodogramRow]


class SimulationRecord(BaseModel):
    """模拟结果的元数据（写入 <out>.meta.json）"""
    schema_version: int = REPORT_SCHEMA_VERSION
    tool_version: str = TOOL_VERSION
    spec: dict
    n: int
    seed: int
    output: Optional[str] = None
    metadata: dict = Field(default_factory=dict)
