"""运行配置

环境变量在入口处通过 python-dotenv 从 .env.local 加载，这里只负责读取。
数值默认值集中放在这里，CLI 和 HTTP 服务共用。
"""
import os
from functools import lru_cache
from typing import Optional

from pydantic import BaseModel, Field

TOOL_VERSION = "0.1.0"
REPORT_SCHEMA_VERSION = 1

DEFAULT_BANDWIDTH_MULTIPLIER = 15.0
DEFAULT_MIN_SEG = 20
DEFAULT_ALPHA = 0.05
DEFAULT_FGN_CAP = 4096
DEFAULT_SMOOTHING_WINDOW = 21
DEFAULT_MAX_LAG = 100


class Settings(BaseModel):
    """全局配置"""
    report_dir: Optional[str] = None
    log_level: str = "INFO"
    host: str = "0.0.0.0"
    port: int = 8000

    bandwidth_multiplier: float = Field(default=DEFAULT_BANDWIDTH_MULTIPLIER, gt=0)
    min_seg: int = Field(default=DEFAULT_MIN_SEG, ge=2)
    alpha: float = Field(default=DEFAULT_ALPHA, gt=0, lt=1)
    fgn_cap: int = Field(default=DEFAULT_FGN_CAP, ge=2)
    smoothing_window: int = Field(default=DEFAULT_SMOOTHING_WINDOW, ge=1)
    max_lag: int = Field(default=DEFAULT_MAX_LAG, ge=1)


def load_settings() -> Settings:
    """从环境变量构造配置

    - LRD_REPORT_DIR: 未指定 --out 时报告写入的目录
    - LOG_LEVEL: 日志级别
    - LRD_HOST / LRD_PORT: HTTP 服务监听地址
    """
    return Settings(
        report_dir=os.getenv("LRD_REPORT_DIR") or None,
        log_level=os.getenv("LOG_LEVEL", "INFO").upper(),
        host=os.getenv("LRD_HOST", "0.0.0.0"),
        port=int(os.getenv("LRD_PORT", "8000")),
    )


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    """获取缓存的配置实例"""
    return load_settings()
