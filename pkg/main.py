"""HTTP 服务：检验、分段、诊断、模拟与带宽检查"""
import logging
import traceback
from contextlib import asynccontextmanager

from dotenv import load_dotenv

# 必须在读取配置之前加载环境变量
load_dotenv(".env.local")

from fastapi import FastAPI, Request
from fastapi.exceptions import HTTPException as FastAPIHTTPException
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import ValidationError

from api import dependencies
from api.routers import analysis, bandwidth, health, simulation
from config import TOOL_VERSION, get_settings
from log_config import setup_logging
from models import error_response, success_response
from services.analysis_service import AnalysisService
from services.exceptions import AnalysisError

setup_logging(get_settings().log_level)

logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """应用生命周期管理"""
    logger.info("正在初始化 AnalysisService...")
    dependencies.analysis_service = AnalysisService(get_settings())
    logger.info("✓ AnalysisService 初始化成功")

    yield

    dependencies.analysis_service = None
    logger.info("✓ AnalysisService 已关闭")


app = FastAPI(
    title="LRD Change-Point API Server",
    description="区分均值变点与长程相依的 CUSUM 检验服务",
    version=TOOL_VERSION,
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.exception_handler(AnalysisError)
async def analysis_exception_handler(request: Request, exc: AnalysisError):
    """分析错误：输入错误 400，计算错误 422"""
    logger.warning(
        f"分析错误: {exc.kind} - {exc.message} | "
        f"路径: {request.url.path} | 方法: {request.method}"
    )
    response = error_response(code=exc.http_status, msg=exc.message, data=exc.to_dict())
    return JSONResponse(status_code=exc.http_status, content=response.model_dump())


@app.exception_handler(FastAPIHTTPException)
async def http_exception_handler(request: Request, exc: FastAPIHTTPException):
    """处理 HTTPException，统一返回格式"""
    logger.error(
        f"HTTP异常: {exc.status_code} - {exc.detail} | "
        f"路径: {request.url.path} | 方法: {request.method}"
    )
    response = error_response(code=exc.status_code, msg=str(exc.detail))
    return JSONResponse(status_code=exc.status_code, content=response.model_dump())


@app.exception_handler(RequestValidationError)
async def validation_exception_handler(request: Request, exc: RequestValidationError):
    """处理请求验证错误，统一返回格式"""
    errors = exc.errors()
    error_msg = "; ".join(f"{err['loc']}: {err['msg']}" for err in errors)
    logger.error(f"请求验证错误: {error_msg} | 路径: {request.url.path} | 方法: {request.method}")

    details = [{"loc": list(err["loc"]), "msg": err["msg"]} for err in errors]
    response = error_response(code=400, msg=f"请求参数验证失败: {error_msg}", data={"errors": details})
    return JSONResponse(status_code=400, content=response.model_dump())


@app.exception_handler(ValidationError)
@app.exception_handler(ValueError)
async def value_exception_handler(request: Request, exc: Exception):
    """计算内核的参数错误按输入错误处理"""
    logger.error(f"参数错误: {exc} | 路径: {request.url.path}")
    response = error_response(code=400, msg=f"参数错误: {exc}")
    return JSONResponse(status_code=400, content=response.model_dump())


@app.exception_handler(Exception)
async def general_exception_handler(request: Request, exc: Exception):
    """处理所有未捕获的异常，统一返回格式"""
    logger.error(
        f"未捕获的异常: {type(exc).__name__} - {exc} | "
        f"路径: {request.url.path} | 方法: {request.method}\n"
        f"堆栈跟踪:\n{traceback.format_exc()}"
    )
    response = error_response(code=500, msg=f"服务器内部错误: {exc}")
    return JSONResponse(status_code=500, content=response.model_dump())


app.include_router(health.router)
app.include_router(analysis.router)
app.include_router(simulation.router)
app.include_router(bandwidth.router)


@app.get("/")
async def root():
    """根路径，返回API信息"""
    return success_response(
        data={"message": "LRD Change-Point API Server", "version": TOOL_VERSION, "docs": "/docs"},
        msg="API服务运行正常",
    )


def main() -> None:
    import sys

    import uvicorn

    settings = get_settings()
    debug_mode = "--debug" in sys.argv or "-d" in sys.argv
    uvicorn.run(
        "main:app",
        host=settings.host,
        port=settings.port,
        reload=debug_mode,
        log_level="debug" if debug_mode else settings.log_level.lower(),
    )


if __name__ == "__main__":
    main()
