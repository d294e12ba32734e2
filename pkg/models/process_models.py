"""生成过程的参数模型

每种过程一个模型，通过 kind 字段区分，可以直接从 JSON 配置文件解析。
"""
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

Innovation = Literal["normal", "student_t"]


class ProcessBase(BaseModel):
    """所有过程共有的参数"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = Field(default=0, ge=0, lt=2**64)
    burnin: int = Field(default=0, ge=0)
    innovation: Innovation = "normal"
    df: float = Field(default=10.0, gt=8.0, description="Student-t 自由度，仅 innovation=student_t 时使用")


class IidNormalSpec(ProcessBase):
    """独立同分布噪声"""
    kind: Literal["iid_normal"] = "iid_normal"
    sd: float = Field(default=1.0, gt=0)


class LinearMASpec(ProcessBase):
    """线性过程 X_k = Σ_j a_j ε_{k-j}（有限系数）"""
    kind: Literal["linear_ma"] = "linear_ma"
    coeffs: list[float] = Field(min_length=1)


class FarimaSpec(ProcessBase):
    """FARIMA(0,d,0)，MA(∞) 截断到 truncation 项（默认 max(5000, 5n)）"""
    kind: Literal["farima"] = "farima"
    d: float = Field(gt=0, lt=0.5)
    truncation: Optional[int] = Field(default=None, ge=1)

    @property
    def hurst(self) -> float:
        return self.d + 0.5


class GarchSpec(ProcessBase):
    """GARCH(p,q)：r_k = σ_k ε_k，σ_k² = ω + Σ α_i r_{k-i}² + Σ β_j σ_{k-j}²"""
    kind: Literal["garch"] = "garch"
    omega: float = Field(gt=0)
    alpha: list[float] = Field(default_factory=list)
    beta: list[float] = Field(default_factory=list)
    burnin: int = Field(default=1000, ge=0)

    @model_validator(mode="after")
    def _check_stationary(self) -> "GarchSpec":
        if any(a < 0 for a in self.alpha) or any(b < 0 for b in self.beta):
            raise ValueError("GARCH 系数 alpha/beta 必须非负")
        persistence = sum(self.alpha) + sum(self.beta)
        if persistence >= 1.0:
            raise ValueError(f"GARCH 不平稳: sum(alpha)+sum(beta) = {persistence:.6g} ≥ 1")
        return self

    @property
    def unconditional_variance(self) -> float:
        """E r_k² = ω / (1 - Σα - Σβ)"""
        return self.omega / (1.0 - sum(self.alpha) - sum(self.beta))


class TwoRegimeGarchSpec(ProcessBase):
    """两段 GARCH：⌊nθ⌋ 之前用 before，之后用 after，两段各自平稳"""
    kind: Literal["garch_regimes"] = "garch_regimes"
    before: GarchSpec
    after: GarchSpec
    theta: float = Field(gt=0, lt=1)


class LarchSpec(ProcessBase):
    """LARCH：r_k = σ_k ε_k，σ_k = a + Σ_{j≥1} b_j r_{k-j}

    显式给出 b，或者给出 (b0, d) 由递推 b_j = b_{j-1}(j+d)/(j+1) 生成 truncation 项。
    """
    kind: Literal["larch"] = "larch"
    a: float
    b: Optional[list[float]] = None
    b0: float = 0.25
    d: float = Field(default=0.35, gt=0, lt=0.5)
    truncation: int = Field(default=2000, ge=1)
    burnin: int = Field(default=5000, ge=0)

    @model_validator(mode="after")
    def _check_a(self) -> "LarchSpec":
        if self.a == 0:
            raise ValueError("LARCH 参数 a 不能为 0")
        return self


class FgnSpec(ProcessBase):
    """分数高斯噪声（单位方差）"""
    kind: Literal["fgn"] = "fgn"
    H: float = Field(ge=0.5, lt=1.0)
    method: Literal["auto", "cholesky", "circulant"] = "auto"


ProcessSpec = Annotated[
    Union[IidNormalSpec, LinearMASpec, FarimaSpec, GarchSpec, TwoRegimeGarchSpec, LarchSpec, FgnSpec],
    Field(discriminator="kind"),
]


class ChangePointModelSpec(BaseModel):
    """均值变点模型：X_i = μ + Y_i（i ≤ k*），μ + Δ + Y_i（i > k*），k* = ⌊nθ⌋"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["changepoint"] = "changepoint"
    theta: float = Field(gt=0, lt=1)
    mu: float = 0.0
    delta: float = 0.0
    innovation: ProcessSpec = Field(default_factory=IidNormalSpec)

    @property
    def seed(self) -> int:
        return self.innovation.seed


AnySpec = Annotated[
    Union[
        IidNormalSpec, LinearMASpec, FarimaSpec, GarchSpec, TwoRegimeGarchSpec,
        LarchSpec, FgnSpec, ChangePointModelSpec,
    ],
    Field(discriminator="kind"),
]

LRD_KINDS = {"farima", "fgn", "larch"}
