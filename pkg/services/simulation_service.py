"""过程模拟

覆盖均值变点模型、线性/FARIMA 过程、GARCH、LARCH 和分数高斯噪声，
以及对应的系数与协方差公式。

所有生成器都是 (spec, n, rng) 的纯函数：同样的种子得到逐位相同的结果。
随机流使用计数器型的 Philox，(主种子, 重复编号) 唯一确定一条子流，
因此 Monte Carlo 结果与执行顺序和线程数无关。
"""
import logging
import math
import threading
import warnings
from functools import lru_cache
from typing import Optional, Union

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg, signal
from scipy.special import gammaln

from config import DEFAULT_FGN_CAP
from models.process_models import (
    AnySpec,
    ChangePointModelSpec,
    FarimaSpec,
    FgnSpec,
    GarchSpec,
    IidNormalSpec,
    LarchSpec,
    LinearMASpec,
    ProcessBase,
    TwoRegimeGarchSpec,
)
from services.exceptions import FactorizationError

logger = logging.getLogger(__name__)

FloatArray = NDArray[np.float64]

# LARCH 四阶矩条件中的常数：高斯新息 L=7，一般情形 L=11
LARCH_L_GAUSSIAN = 7.0
LARCH_L_GENERAL = 11.0

# 稠密分解只在首次遇到 (H, n) 时计算，多线程下避免重复分解
_FACTOR_LOCK = threading.Lock()


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """由主种子和子流编号构造随机数生成器

    Args:
        seed: 64 位主种子
        stream: 子流编号（例如样本量下标、重复编号），不给表示主流

    Returns:
        基于 Philox 的 Generator
    """
    spawn_key = tuple(int(s) for s in stream)
    sequence = np.random.SeedSequence(entropy=int(seed), spawn_key=spawn_key)
    return np.random.Generator(np.random.Philox(sequence))


def draw_innovations(rng: np.random.Generator, size: int, spec: ProcessBase) -> FloatArray:
    """单位方差新息：标准正态，或标准化的 Student-t"""
    if spec.innovation == "normal":
        return rng.standard_normal(size)
    scale = math.sqrt((spec.df - 2.0) / spec.df)
    return rng.standard_t(spec.df, size) * scale


def innovation_fourth_moment(spec: ProcessBase) -> float:
    """E ε⁴（单位方差新息）"""
    if spec.innovation == "normal":
        return 3.0
    nu = spec.df
    return 3.0 * (nu - 2.0) / (nu - 4.0)


# ---------------------------------------------------------------------------
# 线性过程 / FARIMA
# ---------------------------------------------------------------------------

def farima_coefficients(d: float, M: int) -> FloatArray:
    """(1-L)^{-d} 的 MA(∞) 系数 a_0..a_M

    a_0 = 1，a_j = a_{j-1}(j-1+d)/j。
    """
    if not 0.0 < d < 0.5:
        raise ValueError(f"d 必须在 (0, 0.5) 内: {d}")
    if M < 0:
        raise ValueError(f"截断长度必须非负: {M}")
    j = np.arange(1, M + 1, dtype=np.float64)
    return np.concatenate(([1.0], np.cumprod((j - 1.0 + d) / j)))


def farima_autocovariance(d: float, j: ArrayLike) -> FloatArray:
    """单位新息 FARIMA(0,d,0) 的自协方差

    γ_j = Γ(1-2d)Γ(j+d) / (Γ(d)Γ(1-d)Γ(j+1-d))
    """
    if not 0.0 < d < 0.5:
        raise ValueError(f"d 必须在 (0, 0.5) 内: {d}")
    lags = np.abs(np.asarray(j, dtype=np.float64))
    log_gamma = (
        gammaln(1.0 - 2.0 * d) + gammaln(lags + d)
        - gammaln(d) - gammaln(1.0 - d) - gammaln(lags + 1.0 - d)
    )
    return np.exp(log_gamma)


def farima_c0(d: float) -> float:
    """γ_j ∼ c_0 j^{2d-1} 中的常数 c_0 = Γ(1-2d) / (Γ(d)Γ(1-d))"""
    return float(np.exp(gammaln(1.0 - 2.0 * d) - gammaln(d) - gammaln(1.0 - d)))


def farima_tail_variance(d: float, M: int) -> float:
    """截断丢掉的方差 Σ_{j>M} a_j² ≈ M^{2d-1} / ((1-2d)Γ(d)²)"""
    return float(M ** (2.0 * d - 1.0) / ((1.0 - 2.0 * d) * np.exp(2.0 * gammaln(d))))


def default_farima_truncation(n: int) -> int:
    return max(5000, 5 * n)


def linear_coefficients(spec: Union[LinearMASpec, FarimaSpec], n: int) -> FloatArray:
    """线性过程实际使用的系数"""
    if isinstance(spec, FarimaSpec):
        return farima_coefficients(spec.d, spec.truncation or default_farima_truncation(n))
    return np.asarray(spec.coeffs, dtype=np.float64)


def simulate_linear(
    spec: Union[LinearMASpec, FarimaSpec],
    n: int,
    rng: Optional[np.random.Generator] = None,
) -> FloatArray:
    """X_k = Σ_j a_j ε_{k-j}，单侧截断卷积，丢弃 burn-in

    每个输出都使用完整的系数窗口，因此截断只影响远端尾部。
    """
    if n < 1:
        raise ValueError(f"n 必须 ≥ 1: {n}")
    rng = rng or make_rng(spec.seed)
    coeffs = linear_coefficients(spec, n)
    m = coeffs.size - 1
    eps = draw_innovations(rng, n + spec.burnin + m, spec)
    values = signal.convolve(eps, coeffs, mode="valid")
    return values[spec.burnin:]


# ---------------------------------------------------------------------------
# GARCH
# ---------------------------------------------------------------------------

def simulate_garch(
    spec: GarchSpec,
    n: int,
    rng: Optional[np.random.Generator] = None,
) -> FloatArray:
    """GARCH(p,q) 收益率 r_k

    过去的 r² 与 σ² 都从无条件方差出发，burn-in 之后截取 n 个值。
    """
    if n < 1:
        raise ValueError(f"n 必须 ≥ 1: {n}")
    rng = rng or make_rng(spec.seed)
    p, q = len(spec.alpha), len(spec.beta)
    total = spec.burnin + n
    eps = draw_innovations(rng, total, spec)
    level = spec.unconditional_variance

    # 系数倒序，与按时间顺序存放的历史对齐（α_1 对应最近一期）
    alpha = np.asarray(spec.alpha, dtype=np.float64)[::-1]
    beta = np.asarray(spec.beta, dtype=np.float64)[::-1]
    r2 = np.full(total + p, level)
    s2 = np.full(total + q, level)
    returns = np.empty(total)
    for k in range(total):
        sigma2 = spec.omega + float(alpha @ r2[k:k + p]) + float(beta @ s2[k:k + q])
        s2[k + q] = sigma2
        r = math.sqrt(sigma2) * eps[k]
        returns[k] = r
        r2[k + p] = r * r
    return returns[spec.burnin:]


def simulate_garch_regimes(
    spec: TwoRegimeGarchSpec,
    n: int,
    rng: Optional[np.random.Generator] = None,
) -> FloatArray:
    """两段 GARCH：前 ⌊nθ⌋ 个来自 before，其余来自 after"""
    rng = rng or make_rng(spec.seed)
    k_star = math.floor(n * spec.theta)
    if not 1 <= k_star <= n - 1:
        raise ValueError(f"变点位置 ⌊nθ⌋={k_star} 不在 [1, n-1] 内")
    first = simulate_garch(spec.before, k_star, rng)
    second = simulate_garch(spec.after, n - k_star, rng)
    return np.concatenate((first, second))


# ---------------------------------------------------------------------------
# LARCH
# ---------------------------------------------------------------------------

def larch_coefficients(b0: float, d: float, J: int) -> FloatArray:
    """b_1..b_J，递推 b_j = b_{j-1}(j+d)/(j+1)"""
    if not 0.0 < d < 0.5:
        raise ValueError(f"d 必须在 (0, 0.5) 内: {d}")
    if J < 1:
        raise ValueError(f"J 必须 ≥ 1: {J}")
    j = np.arange(1, J + 1, dtype=np.float64)
    return b0 * np.cumprod((j + d) / (j + 1.0))


def larch_b(spec: LarchSpec) -> FloatArray:
    if spec.b is not None:
        return np.asarray(spec.b, dtype=np.float64)
    return larch_coefficients(spec.b0, spec.d, spec.truncation)


def larch_moment_gate(spec: LarchSpec) -> float:
    """四阶平稳充分条件左端 L·(Eε⁴)^{1/2}·Σ b_j²，小于 1 时条件成立"""
    L = LARCH_L_GAUSSIAN if spec.innovation == "normal" else LARCH_L_GENERAL
    b = larch_b(spec)
    return float(L * math.sqrt(innovation_fourth_moment(spec)) * np.dot(b, b))


@lru_cache(maxsize=64)
def _warn_gate_once(key: tuple) -> None:
    value = key[-1]
    message = f"LARCH 四阶矩条件不成立: L·(Eε⁴)^(1/2)·Σb² = {value:.4f} ≥ 1，继续模拟"
    logger.warning(message)
    warnings.warn(message, UserWarning, stacklevel=3)


def simulate_larch(
    spec: LarchSpec,
    n: int,
    rng: Optional[np.random.Generator] = None,
) -> FloatArray:
    """LARCH 收益率 r_k，历史截断到 J 期，从 σ = a 开始预热"""
    if n < 1:
        raise ValueError(f"n 必须 ≥ 1: {n}")
    gate = larch_moment_gate(spec)
    if gate >= 1.0:
        _warn_gate_once((spec.a, spec.b0, spec.d, spec.truncation, spec.innovation, gate))

    rng = rng or make_rng(spec.seed)
    b_rev = larch_b(spec)[::-1].copy()
    J = b_rev.size
    total = spec.burnin + n
    eps = draw_innovations(rng, total, spec)
    r = np.zeros(J + total)
    for k in range(total):
        sigma = spec.a + float(b_rev @ r[k:k + J])
        r[J + k] = sigma * eps[k]
    return r[J + spec.burnin:]


# ---------------------------------------------------------------------------
# 分数高斯噪声
# ---------------------------------------------------------------------------

def fgn_autocovariance(H: float, j: ArrayLike) -> FloatArray:
    """fGn 自协方差 γ_j = ((j+1)^{2H} - 2j^{2H} + |j-1|^{2H}) / 2，γ_0 = 1"""
    if not 0.5 <= H < 1.0:
        raise ValueError(f"H 必须在 [0.5, 1) 内: {H}")
    lags = np.abs(np.asarray(j, dtype=np.float64))
    two_h = 2.0 * H
    return 0.5 * ((lags + 1.0) ** two_h - 2.0 * lags ** two_h + np.abs(lags - 1.0) ** two_h)


@lru_cache(maxsize=4)
def _fgn_cholesky_factor(H: float, n: int) -> FloatArray:
    cov = linalg.toeplitz(fgn_autocovariance(H, np.arange(n)))
    try:
        factor = linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError as e:
        raise FactorizationError(
            f"fGn 协方差矩阵不正定（H={H}, n={n}）: {e}", details={"H": H, "n": n}
        ) from e
    factor.flags.writeable = False
    return factor


@lru_cache(maxsize=8)
def _fgn_circulant_eigenvalues(H: float, n: int) -> FloatArray:
    gammas = fgn_autocovariance(H, np.arange(n + 1))
    row = np.concatenate((gammas, gammas[-2:0:-1]))
    eigenvalues = np.fft.fft(row).real
    if eigenvalues.min() < -1e-10 * eigenvalues.max():
        raise FactorizationError(
            f"循环嵌入出现负特征值（H={H}, n={n}）", details={"H": H, "n": n}
        )
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    eigenvalues.flags.writeable = False
    return eigenvalues


def _fgn_circulant(H: float, n: int, rng: np.random.Generator) -> FloatArray:
    """Davies–Harte 循环嵌入（精确方法）"""
    eigenvalues = _fgn_circulant_eigenvalues(H, n)
    m = 2 * n
    normals = rng.standard_normal(m)
    w = np.empty(m, dtype=np.complex128)
    w[0] = math.sqrt(eigenvalues[0] / m) * normals[0]
    w[n] = math.sqrt(eigenvalues[n] / m) * normals[1]
    scale = np.sqrt(eigenvalues[1:n] / (2.0 * m))
    w[1:n] = scale * (normals[2:n + 1] + 1j * normals[n + 1:])
    w[n + 1:] = np.conj(w[1:n][::-1])
    return np.fft.fft(w).real[:n]


def simulate_fgn(
    H: float,
    n: int,
    seed: Optional[int] = None,
    *,
    rng: Optional[np.random.Generator] = None,
    cap: int = DEFAULT_FGN_CAP,
    method: str = "auto",
) -> FloatArray:
    """精确生成单位方差分数高斯噪声

    默认在 n ≤ cap 时对 n×n 协方差矩阵做 Cholesky 分解，超过上限时改用循环嵌入。

    Args:
        H: Hurst 参数，1/2 ≤ H < 1
        n: 长度
        seed: 种子（未给 rng 时使用）
        rng: 随机数生成器
        cap: 稠密分解的长度上限
        method: auto / cholesky / circulant

    Returns:
        长度为 n 的 fGn 样本，部分和在网格上模拟 W_H

    Raises:
        ValueError: 参数非法，或 method=cholesky 且 n 超过上限
        FactorizationError: 协方差分解失败
    """
    if not 0.5 <= H < 1.0:
        raise ValueError(f"H 必须在 [0.5, 1) 内: {H}")
    if n < 1:
        raise ValueError(f"n 必须 ≥ 1: {n}")
    if method not in ("auto", "cholesky", "circulant"):
        raise ValueError(f"未知的 fGn 生成方法: {method}")
    rng = rng or make_rng(seed or 0)
    if H == 0.5:
        return rng.standard_normal(n)
    if method == "auto":
        method = "cholesky" if n <= cap else "circulant"
    if method == "cholesky":
        if n > cap:
            raise ValueError(f"n={n} 超过稠密分解上限 {cap}，请使用 circulant 方法")
        with _FACTOR_LOCK:
            factor = _fgn_cholesky_factor(float(H), n)
        return factor @ rng.standard_normal(n)
    return _fgn_circulant(float(H), n, rng)


# ---------------------------------------------------------------------------
# 变点模型与统一入口
# ---------------------------------------------------------------------------

def simulate_changepoint(
    spec: ChangePointModelSpec,
    n: int,
    rng: Optional[np.random.Generator] = None,
    *,
    fgn_cap: int = DEFAULT_FGN_CAP,
) -> FloatArray:
    """X_i = μ + Y_i（i ≤ k*），μ + Δ + Y_i（i > k*），k* = ⌊nθ⌋"""
    rng = rng or make_rng(spec.innovation.seed)
    values = spec.mu + simulate(spec.innovation, n, rng, fgn_cap=fgn_cap)
    k_star = math.floor(n * spec.theta)
    values[k_star:] += spec.delta
    return values


def simulate(
    spec: AnySpec,
    n: int,
    rng: Optional[np.random.Generator] = None,
    *,
    fgn_cap: int = DEFAULT_FGN_CAP,
) -> FloatArray:
    """按 kind 分派到对应的生成器"""
    rng = rng or make_rng(spec.seed)
    if isinstance(spec, ChangePointModelSpec):
        return simulate_changepoint(spec, n, rng, fgn_cap=fgn_cap)
    if isinstance(spec, IidNormalSpec):
        return spec.sd * draw_innovations(rng, n, spec)
    if isinstance(spec, (LinearMASpec, FarimaSpec)):
        return simulate_linear(spec, n, rng)
    if isinstance(spec, GarchSpec):
        return simulate_garch(spec, n, rng)
    if isinstance(spec, TwoRegimeGarchSpec):
        return simulate_garch_regimes(spec, n, rng)
    if isinstance(spec, LarchSpec):
        return simulate_larch(spec, n, rng)
    if isinstance(spec, FgnSpec):
        return simulate_fgn(spec.H, n, rng=rng, cap=fgn_cap, method=spec.method)
    raise ValueError(f"不支持的过程类型: {type(spec).__name__}")


def simulation_metadata(spec: AnySpec, n: int) -> dict:
    """模拟的附加信息（截断误差、矩条件等），写入 sidecar 文件"""
    inner = spec.innovation if isinstance(spec, ChangePointModelSpec) else spec
    meta: dict = {"kind": spec.kind}
    if isinstance(inner, FarimaSpec):
        M = inner.truncation or default_farima_truncation(n)
        meta["farima_truncation"] = M
        meta["farima_tail_variance"] = farima_tail_variance(inner.d, M)
    if isinstance(inner, LarchSpec):
        meta["larch_moment_gate"] = larch_moment_gate(inner)
    if isinstance(inner, GarchSpec):
        meta["unconditional_variance"] = inner.unconditional_variance
    if isinstance(inner, TwoRegimeGarchSpec):
        meta["unconditional_variance_before"] = inner.before.unconditional_variance
        meta["unconditional_variance_after"] = inner.after.unconditional_variance
        meta["break_index"] = math.floor(n * inner.theta)
    if isinstance(spec, ChangePointModelSpec):
        meta["break_index"] = math.floor(n * spec.theta)
    return meta
