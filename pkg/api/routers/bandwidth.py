"""带宽规则检查路由"""
from fastapi import APIRouter, Depends

from api.dependencies import get_analysis_service
from models import BandwidthCheckRequest, success_response
from services.analysis_service import AnalysisService

router = APIRouter(prefix="/api/bandwidth", tags=["bandwidth"])


@router.post("/check")
def check_bandwidth(request: BandwidthCheckRequest, service: AnalysisService = Depends(get_analysis_service)):
    report = service.check_bandwidth(request.rule, request.H, request.n_max)
    msg = "带宽规则通过检查" if report.passed else "带宽规则未通过检查"
    return success_response(data=report, msg=msg)
