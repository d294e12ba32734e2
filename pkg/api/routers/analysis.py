"""检验、分段与诊断路由"""
import logging

from fastapi import APIRouter, Depends

from api.dependencies import get_analysis_service
from models import DiagnosticsRequest, SegmentRequest, SplitTestRequest, success_response
from services.analysis_service import AnalysisService, apply_pipeline

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api/analysis", tags=["analysis"])


@router.post("/test")
def run_test(request: SplitTestRequest, service: AnalysisService = Depends(get_analysis_service)):
    """
    M_n 检验

    Args:
        request: 序列、变换链、α、带宽规则与最小分段长度
        service: 分析服务实例（依赖注入）

    Returns:
        与命令行 structured 输出相同的报告
    """
    series = apply_pipeline(request.values, request.pipeline)
    report = service.test_series(
        series, request.pipeline, request.alpha, request.bandwidth, request.min_seg
    )
    return success_response(data=report, msg=report.summary)


@router.post("/segment")
def run_segmentation(request: SegmentRequest, service: AnalysisService = Depends(get_analysis_service)):
    """多阶段分段，返回带完整阶段记录的报告"""
    series = apply_pipeline(request.values, request.pipeline)
    report = service.segment_series(
        series, request.pipeline, request.alpha, request.max_changes, request.bandwidth, request.min_seg
    )
    return success_response(data=report, msg=report.summary)


@router.post("/diagnostics")
def diagnostics(request: DiagnosticsRequest, service: AnalysisService = Depends(get_analysis_service)):
    series = apply_pipeline(request.values, request.pipeline)
    table = service.diagnostics_series(series, request.pipeline, request.max_lag, request.smoothing_window)
    return success_response(data=table)
