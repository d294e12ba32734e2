"""健康检查路由"""
from fastapi import APIRouter, Depends

from api.dependencies import get_analysis_service
from config import TOOL_VERSION
from models import success_response
from services.analysis_service import AnalysisService

router = APIRouter(tags=["health"])


@router.get("/health")
async def health_check(service: AnalysisService = Depends(get_analysis_service)):
    """健康检查端点，返回版本和当前数值默认值"""
    settings = service.settings
    return success_response(
        data={
            "status": "healthy",
            "version": TOOL_VERSION,
            "defaults": {
                "alpha": settings.alpha,
                "bandwidth_multiplier": settings.bandwidth_multiplier,
                "min_seg": settings.min_seg,
            },
        },
        msg="服务运行正常",
    )
