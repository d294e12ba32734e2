"""分析过程中的异常类型

每个异常带有 CLI 退出码和 HTTP 状态码，入口层据此统一转换。
"""
from typing import Optional


class AnalysisError(Exception):
    """所有分析错误的基类"""
    exit_code: int = 2
    http_status: int = 500
    kind: str = "analysis_error"

    def __init__(self, message: str, *, details: Optional[dict] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> dict:
        """结构化错误描述（写入报告或 HTTP 响应）"""
        return {"error": self.kind, "message": self.message, "details": self.details}


class InputError(AnalysisError):
    """输入数据或配置错误（退出码 1）"""
    exit_code = 1
    http_status = 400
    kind = "input_error"


class InvalidSeries(InputError, ValueError):
    """序列为空或包含非有限值"""
    kind = "invalid_series"


class ComputationError(AnalysisError):
    """统计量无法计算（退出码 2）"""
    exit_code = 2
    http_status = 422
    kind = "computation_error"


class ZeroVariance(ComputationError):
    """长程方差估计为零，无法做自归一化"""
    kind = "zero_variance"


class NegativeVariance(ComputationError):
    """自定义核给出负的方差估计，核不可用"""
    kind = "negative_variance"


class SegmentTooShort(ComputationError):
    """分段长度不足（k̂ 离端点太近）"""
    kind = "segment_too_short"


class FactorizationError(ComputationError):
    """协方差矩阵分解失败"""
    kind = "factorization_error"
