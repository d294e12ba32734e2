"""API 依赖项"""
from typing import Optional

from fastapi import HTTPException

from services.analysis_service import AnalysisService

# 全局分析服务实例（在 main.py 的 lifespan 中初始化）
analysis_service: Optional[AnalysisService] = None


def get_analysis_service() -> AnalysisService:
    """获取分析服务实例

    Raises:
        HTTPException: 服务未初始化
    """
    if not analysis_service:
        raise HTTPException(status_code=503, detail="服务未初始化")
    return analysis_service
