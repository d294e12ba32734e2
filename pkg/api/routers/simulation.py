"""模拟路由"""
import logging

from fastapi import APIRouter, Depends

from api.dependencies import get_analysis_service
from models import SimulationRequest, success_response
from services.analysis_service import AnalysisService

logger = logging.getLogger(__name__)

router = APIRouter(prefix="/api/simulation", tags=["simulation"])


@router.post("/run")
def run_simulation(request: SimulationRequest, service: AnalysisService = Depends(get_analysis_service)):
    """
    按过程参数模拟序列

    Returns:
        values（模拟值）和 record（解析后的参数、种子与元数据）
    """
    values, record = service.run_simulation(request.spec, request.n, request.seed)
    logger.info(f"HTTP 模拟完成: {record.spec['kind']}, n={record.n}, 种子 {record.seed}")
    return success_response(data={"values": values.tolist(), "record": record.model_dump(mode="json")})
