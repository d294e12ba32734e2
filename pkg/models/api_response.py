"""统一API响应模型"""
from typing import Any, Generic, Optional, TypeVar

from pydantic import BaseModel

T = TypeVar('T')


class ApiResponse(BaseModel, Generic[T]):
    """统一API响应格式

    - code: HTTP状态码
    - success: 是否成功
    - msg: 消息描述
    - data: 响应数据；出错时为结构化错误描述
    """
    code: int
    success: bool
    msg: str
    data: Optional[T] = None


def success_response(data: Any = None, msg: str = "操作成功") -> ApiResponse:
    """创建成功响应

    pydantic 模型先转成 JSON 兼容的字典，nan 写成 null。
    """
    if isinstance(data, BaseModel):
        data = data.model_dump(mode="json")
    return ApiResponse(code=200, success=True, msg=msg, data=data)


def error_response(code: int, msg: str, data: Any = None) -> ApiResponse:
    """创建错误响应

    Args:
        code: 错误状态码
        msg: 错误消息
        data: 错误详情（可选）
    """
    return ApiResponse(code=code, success=False, msg=msg, data=data)
