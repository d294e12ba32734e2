"""数据模型包"""
from models.api_response import ApiResponse, success_response, error_response
from models.report_models import DiagnosticsTable, Pipeline, Report, SimulationRecord
from models.request_models import (
    BandwidthCheckRequest,
    DiagnosticsRequest,
    SegmentRequest,
    SimulationRequest,
    SplitTestRequest,
)

__all__ = [
    "ApiResponse",
    "success_response",
    "error_response",
    "DiagnosticsTable",
    "Pipeline",
    "Report",
    "SimulationRecord",
    "BandwidthCheckRequest",
    "DiagnosticsRequest",
    "SegmentRequest",
    "SimulationRequest",
    "SplitTestRequest",
]
