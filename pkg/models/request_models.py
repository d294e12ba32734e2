"""HTTP 请求模型"""
from typing import Optional

from pydantic import BaseModel, Field

from models.process_models import AnySpec
from models.report_models import Pipeline
from models.stats_models import BandwidthRule


class SeriesRequest(BaseModel):
    """序列直接放在请求体里，变换链与命令行相同"""
    values: list[float] = Field(min_length=1)
    pipeline: Pipeline = Field(default_factory=Pipeline)


class SplitTestRequest(SeriesRequest):
    alpha: Optional[float] = Field(default=None, gt=0, lt=1)
    bandwidth: Optional[BandwidthRule] = None
    min_seg: Optional[int] = Field(default=None, ge=2)


class SegmentRequest(SplitTestRequest):
    max_changes: int = Field(default=2, ge=1)


class DiagnosticsRequest(SeriesRequest):
    max_lag: Optional[int] = Field(default=None, ge=0)
    smoothing_window: Optional[int] = Field(default=None, ge=1)


class SimulationRequest(BaseModel):
    spec: AnySpec
    n: int = Field(ge=1, le=1_000_000)
    seed: Optional[int] = Field(default=None, ge=0, lt=2**64)


class BandwidthCheckRequest(BaseModel):
    rule: BandwidthRule = Field(default_factory=BandwidthRule)
    H: Optional[float] = Field(default=None, gt=0.5, lt=1.0)
    n_max: int = Field(default=2**40, ge=4)
