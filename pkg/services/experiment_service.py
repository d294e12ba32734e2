"""Monte Carlo 实验

拒绝率表、Bartlett 估计的一致性、极限泛函抽样和发散性检查。
每次重复使用 (主种子, 子流编号) 确定的独立随机流，
汇总只依赖重复编号，结果与线程数和调度顺序无关。
"""
import logging
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, TypeVar, Union

import numpy as np
from numpy.typing import ArrayLike

from config import DEFAULT_FGN_CAP, DEFAULT_MIN_SEG
from models.experiment_models import (
    ConsistencyConfig,
    ConsistencyReport,
    ConsistencyRow,
    DivergenceConfig,
    DivergenceReport,
    LimitConfig,
    LimitFunctionalReport,
    LimitFunctionalSample,
    McConfig,
    MedianSummary,
    RejectionRow,
    RejectionTable,
)
from models.process_models import (
    AnySpec,
    ChangePointModelSpec,
    FarimaSpec,
    FgnSpec,
    GarchSpec,
    IidNormalSpec,
    LarchSpec,
    LinearMASpec,
    LRD_KINDS,
    ProcessSpec,
    TwoRegimeGarchSpec,
)
from models.stats_models import BandwidthRule
from services.asymptotics import critical_value, default_bandwidth
from services.exceptions import ComputationError
from services.simulation_service import (
    farima_autocovariance,
    fgn_autocovariance,
    linear_coefficients,
    make_rng,
    simulate,
    simulate_fgn,
    simulation_metadata,
)
from services.stats_core import cusum_statistic, long_run_variance, split_statistics

logger = logging.getLogger(__name__)

T = TypeVar("T")

BOOTSTRAP_RESAMPLES = 200
# bootstrap 使用的子流前缀，与重复编号的子流不重叠
_BOOTSTRAP_STREAM = 0xB007
# 拟合 c_0 的滞后范围
_C0_LAGS = np.geomspace(1e4, 1e5, 41)
MAX_FAILURE_RATE = 0.01


# ---------------------------------------------------------------------------
# 公共工具
# ---------------------------------------------------------------------------

def _run_indexed(task: Callable[[int], T], count: int, workers: int) -> list[T]:
    """按编号执行 count 个独立任务，结果按编号排列"""
    if workers <= 1 or count <= 1:
        return [task(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(task, range(count)))


def median_summary(values: ArrayLike, seed: int = 0, resamples: int = BOOTSTRAP_RESAMPLES) -> MedianSummary:
    """样本中位数，以及 bootstrap 中位数分布的四分位区间

    Args:
        values: 样本
        seed: bootstrap 随机流的主种子
        resamples: 重抽样次数

    Returns:
        MedianSummary；空样本时各值为 nan
    """
    sample = np.asarray(values, dtype=np.float64)
    if sample.size == 0:
        return MedianSummary(median=math.nan, iqr_low=math.nan, iqr_high=math.nan, count=0)
    rng = make_rng(seed, _BOOTSTRAP_STREAM, sample.size)
    draws = rng.integers(0, sample.size, size=(resamples, sample.size))
    medians = np.median(sample[draws], axis=1)
    low, high = np.percentile(medians, [25.0, 75.0])
    return MedianSummary(
        median=float(np.median(sample)), iqr_low=float(low), iqr_high=float(high), count=int(sample.size)
    )


def _observe(x: np.ndarray, observable: str) -> np.ndarray:
    return x * x if observable == "square" else x


# ---------------------------------------------------------------------------
# 拒绝率
# ---------------------------------------------------------------------------

def _replicate(config: McConfig, index: int) -> Union[float, str]:
    """一次重复：返回统计量，失败时返回错误类型"""
    rng = make_rng(config.master_seed, index)
    try:
        x = _observe(simulate(config.process, config.n, rng, fgn_cap=config.fgn_cap), config.observable)
        if config.statistic == "cusum":
            return cusum_statistic(x, default_bandwidth(config.n, config.bandwidth))
        return split_statistics(x, config.bandwidth, config.min_seg).mn
    except ComputationError as e:
        return e.kind


def rejection_table(config: McConfig) -> RejectionTable:
    """模拟 R 次，统计各 α 下统计量超过临界值的比例

    statistic=split 时比较 M_n 与 c(2)，statistic=cusum 时比较 T_n 与 c(1)。
    单次重复中的计算错误只计数，不中断实验。

    Args:
        config: 实验配置

    Returns:
        RejectionTable，比例的分母是成功完成的重复次数
    """
    u = 2 if config.statistic == "split" else 1
    logger.info(
        f"开始拒绝率实验: {config.process.kind}, n={config.n}, R={config.replications}, "
        f"统计量={config.statistic}, 观测={config.observable}"
    )
    outcomes = _run_indexed(lambda i: _replicate(config, i), config.replications, config.workers)

    statistics = np.array([o for o in outcomes if isinstance(o, float)], dtype=np.float64)
    failure_kinds = Counter(o for o in outcomes if isinstance(o, str))
    failures = sum(failure_kinds.values())
    completed = int(statistics.size)

    rows = []
    for alpha in config.alphas:
        c = critical_value(u, alpha).value
        rejections = int(np.count_nonzero(statistics > c))
        p = rejections / completed if completed else 0.0
        se = math.sqrt(p * (1.0 - p) / completed) if completed else 0.0
        rows.append(RejectionRow(
            alpha=alpha, critical_value=c, rejections=rejections, fraction=p, standard_error=se
        ))

    failure_rate = failures / config.replications
    if failures:
        logger.warning(f"{failures} 次重复失败 ({dict(failure_kinds)})，失败率 {failure_rate:.2%}")

    metadata = simulation_metadata(config.process, config.n)
    metadata["bandwidth"] = config.bandwidth.describe()
    metadata["min_seg"] = config.min_seg
    metadata["innovation"] = _innovation_label(config.process)

    table = RejectionTable(
        rows=rows,
        n=config.n,
        replications=config.replications,
        master_seed=config.master_seed,
        statistic=config.statistic,
        observable=config.observable,
        critical_u=u,
        completed=completed,
        failures=failures,
        failure_rate=failure_rate,
        failure_kinds=dict(failure_kinds),
        statistic_median=median_summary(statistics, config.master_seed),
        metadata=metadata,
        raw_statistics=statistics.tolist() if config.keep_raw else None,
    )
    logger.info(
        "拒绝率实验完成: " + ", ".join(f"α={r.alpha:g}: {r.fraction:.3f}±{r.standard_error:.3f}" for r in rows)
    )
    return table


def _innovation_label(spec: AnySpec) -> str:
    inner = spec.innovation if isinstance(spec, ChangePointModelSpec) else spec
    if inner.innovation == "student_t":
        return f"student_t(df={inner.df:g})"
    return "normal"


# ---------------------------------------------------------------------------
# Bartlett 估计的一致性
# ---------------------------------------------------------------------------

def fit_c0(autocovariance: Callable[[np.ndarray], np.ndarray], H: float, lags: ArrayLike = _C0_LAGS) -> float:
    """在大滞后处拟合 γ_j ≈ c_0 j^{2H-2} 中的 c_0（固定斜率的对数最小二乘）"""
    j = np.asarray(lags, dtype=np.float64)
    gamma = np.asarray(autocovariance(j), dtype=np.float64)
    return float(np.exp(np.mean(np.log(gamma) + (2.0 - 2.0 * H) * np.log(j))))


def _weak_target(process: ProcessSpec) -> float:
    """弱相依过程的长程方差 Σ γ_j"""
    if isinstance(process, IidNormalSpec):
        return process.sd ** 2
    if isinstance(process, LinearMASpec):
        return float(np.sum(linear_coefficients(process, 1))) ** 2
    if isinstance(process, GarchSpec):
        return process.unconditional_variance
    raise ValueError(f"过程 {process.kind} 没有解析的长程方差")


def _lrd_target(process: ProcessSpec) -> tuple[float, float, float]:
    """长程相依过程的 (H, c_0, c_H²)"""
    if isinstance(process, FgnSpec):
        H = process.H
        c0 = fit_c0(lambda j: fgn_autocovariance(H, j), H)
    elif isinstance(process, FarimaSpec):
        H = process.hurst
        c0 = fit_c0(lambda j: farima_autocovariance(process.d, j), H)
    else:
        raise ValueError(f"过程 {process.kind} 没有协方差公式，无法计算 c_H²")
    if H == 0.5:
        raise ValueError("H = 1/2 不是长程相依")
    return H, c0, c0 / (H * (2.0 * H - 1.0))


def bartlett_consistency(
    process: ProcessSpec,
    n_grid: list[int],
    q_rule: Optional[BandwidthRule] = None,
    reps: int = 100,
    master_seed: int = 0,
    workers: int = 1,
    fgn_cap: int = DEFAULT_FGN_CAP,
) -> ConsistencyReport:
    """检查 Bartlett 估计 s_n² 随 n 的收敛

    弱相依过程比较 s_n² 的中位数与 Σ γ_j；
    长程相依过程（FARIMA、fGn）比较 q^{1-2H} s_n² 的中位数与 c_0/(H(2H-1))。

    Args:
        process: 平稳过程
        n_grid: 样本量列表
        q_rule: 带宽规则
        reps: 每个样本量的重复次数
        master_seed: 主种子
        workers: 线程数
        fgn_cap: fGn 稠密分解的长度上限

    Returns:
        ConsistencyReport

    Raises:
        ValueError: 过程没有可用的解析目标值
    """
    q_rule = q_rule or BandwidthRule()
    lrd = process.kind in LRD_KINDS
    if lrd:
        H, c0, target = _lrd_target(process)
    else:
        H, c0, target = None, None, _weak_target(process)
    logger.info(f"开始一致性实验: {process.kind}, n={n_grid}, 目标值 {target:.6g}")

    rows = []
    failures = 0
    for grid_index, n in enumerate(n_grid):
        q = default_bandwidth(n, q_rule)

        def estimate(rep: int, n: int = n, q: int = q, grid_index: int = grid_index) -> Optional[float]:
            rng = make_rng(master_seed, grid_index, rep)
            x = simulate(process, n, rng, fgn_cap=fgn_cap)
            try:
                return long_run_variance(x, q).value
            except ComputationError:
                return None

        values = _run_indexed(estimate, reps, workers)
        s2 = np.array([v for v in values if v is not None], dtype=np.float64)
        failures += reps - s2.size
        scaled = s2 * q ** (1.0 - 2.0 * H) if lrd else s2
        scaled_summary = median_summary(scaled, master_seed)
        rows.append(ConsistencyRow(
            n=n,
            q=q,
            s2=median_summary(s2, master_seed),
            scaled=scaled_summary,
            relative_error=abs(scaled_summary.median - target) / target,
        ))
        logger.info(f"n={n}, q={q}: 中位数 {scaled_summary.median:.6g}（目标 {target:.6g}）")

    return ConsistencyReport(
        regime="lrd" if lrd else "weak",
        process_kind=process.kind,
        target=target,
        H=H,
        c0=c0,
        rows=rows,
        failures=failures,
    )


# ---------------------------------------------------------------------------
# 极限泛函
# ---------------------------------------------------------------------------

def _bridge_sup(path: np.ndarray, t: np.ndarray) -> float:
    """sup |W(t) - W(a) - (t-a)/(b-a)·(W(b) - W(a))|，path、t 为 [a, b] 上的网格值"""
    span = t[-1] - t[0]
    if span <= 0:
        return 0.0
    bridge = path - path[0] - (t - t[0]) / span * (path[-1] - path[0])
    return float(np.max(np.abs(bridge)) / math.sqrt(span))


def limit_functional_samples(
    H: float,
    grid_n: int = 2048,
    reps: int = 1000,
    seed: int = 0,
    fgn_cap: int = DEFAULT_FGN_CAP,
) -> list[LimitFunctionalSample]:
    """在网格上抽样 fBm 路径，计算 ξ 与两段归一化上确界

    W_H 由累加 fGn 并除以 grid_n^H 得到；B_H(t) = W_H(t) - t W_H(1)，
    ξ 是 |B_H| 在网格上的首个最大值位置。
    v1 = sup_{t≤ξ} |W(t) - (t/ξ) W(ξ)| / √ξ，v2 为 [ξ, 1] 上的对应量。

    Raises:
        ValueError: H 不在 [1/2, 1) 内，或 grid_n 超过 fGn 上限
    """
    if not 0.5 <= H < 1.0:
        raise ValueError(f"H 必须在 [0.5, 1) 内: {H}")
    if not 2 <= grid_n <= fgn_cap:
        raise ValueError(f"grid_n 必须在 [2, {fgn_cap}] 内: {grid_n}")

    t = np.arange(grid_n + 1, dtype=np.float64) / grid_n
    samples = []
    for rep in range(reps):
        increments = simulate_fgn(H, grid_n, rng=make_rng(seed, rep), cap=fgn_cap)
        path = np.concatenate(([0.0], np.cumsum(increments))) / grid_n ** H
        bridge = path - t * path[-1]
        k = int(np.argmax(np.abs(bridge)))
        samples.append(LimitFunctionalSample(
            xi=k / grid_n,
            v1=_bridge_sup(path[:k + 1], t[:k + 1]),
            v2=_bridge_sup(path[k:], t[k:]),
            boundary_hit=k in (0, grid_n),
        ))
    hits = sum(s.boundary_hit for s in samples)
    if hits:
        logger.warning(f"{hits}/{reps} 个样本的 ξ 落在端点上")
    return samples


def summarize_limit_functionals(config: LimitConfig, fgn_cap: int = DEFAULT_FGN_CAP) -> LimitFunctionalReport:
    """抽样并汇总：ξ 的均值、边界命中次数、v1 与 v2 的十分位数"""
    samples = limit_functional_samples(
        config.H, config.grid_n, config.replications, config.master_seed, fgn_cap=fgn_cap
    )
    deciles = np.arange(1, 10) * 10.0
    v1 = np.array([s.v1 for s in samples])
    v2 = np.array([s.v2 for s in samples])
    return LimitFunctionalReport(
        H=config.H,
        grid_n=config.grid_n,
        replications=config.replications,
        master_seed=config.master_seed,
        mean_xi=float(np.mean([s.xi for s in samples])),
        boundary_hits=sum(s.boundary_hit for s in samples),
        v1_deciles=np.percentile(v1, deciles).tolist(),
        v2_deciles=np.percentile(v2, deciles).tolist(),
        samples=samples if config.keep_raw else None,
    )


# ---------------------------------------------------------------------------
# 发散性
# ---------------------------------------------------------------------------

def _divergence_mode(process: AnySpec) -> str:
    if isinstance(process, ChangePointModelSpec):
        if process.delta != 0:
            return "changepoint"
        process = process.innovation
    return "lrd" if process.kind in LRD_KINDS else "null"


def divergence_check(
    process: AnySpec,
    n_small: int,
    n_large: int,
    reps: int = 100,
    master_seed: int = 0,
    bandwidth: Optional[BandwidthRule] = None,
    min_seg: int = DEFAULT_MIN_SEG,
    workers: int = 1,
    fgn_cap: int = DEFAULT_FGN_CAP,
) -> DivergenceReport:
    """比较两个样本量下 M_n 与 T_n 的中位数

    - 长程相依输入：M_n 的中位数随 n 增大
    - 变点输入：T_n 中位数之比在 √(n_large/n_small) 的 35% 以内
    - 其它（原假设）：T_n 中位数之比在 [0.8, 1.25] 内

    Raises:
        ValueError: n_small ≥ n_large
    """
    if n_small >= n_large:
        raise ValueError(f"需要 n_small < n_large: {n_small}, {n_large}")
    bandwidth = bandwidth or BandwidthRule()
    mode = _divergence_mode(process)
    logger.info(f"开始发散性检查: {process.kind} ({mode}), n={n_small}/{n_large}, R={reps}")

    def statistics_at(size_index: int, n: int) -> tuple[list[float], list[float], int]:
        q = default_bandwidth(n, bandwidth)

        def one(rep: int) -> tuple[Optional[float], Optional[float]]:
            x = simulate(process, n, make_rng(master_seed, size_index, rep), fgn_cap=fgn_cap)
            try:
                tn: Optional[float] = cusum_statistic(x, q)
            except ComputationError:
                tn = None
            try:
                mn: Optional[float] = split_statistics(x, bandwidth, min_seg).mn
            except ComputationError:
                mn = None
            return tn, mn

        pairs = _run_indexed(one, reps, workers)
        tns = [tn for tn, _ in pairs if tn is not None]
        mns = [mn for _, mn in pairs if mn is not None]
        failed = sum(1 for tn, mn in pairs if tn is None or mn is None)
        return tns, mns, failed

    tn_small, mn_small, failed_small = statistics_at(0, n_small)
    tn_large, mn_large, failed_large = statistics_at(1, n_large)
    failures = failed_small + failed_large
    failure_rate = failures / (2 * reps)

    summaries = {
        "tn_small": median_summary(tn_small, master_seed),
        "tn_large": median_summary(tn_large, master_seed),
        "mn_small": median_summary(mn_small, master_seed),
        "mn_large": median_summary(mn_large, master_seed),
    }
    ratio = summaries["tn_large"].median / summaries["tn_small"].median

    expected: Optional[float] = None
    if mode == "lrd":
        passed = summaries["mn_large"].median > summaries["mn_small"].median
    elif mode == "changepoint":
        expected = math.sqrt(n_large / n_small)
        passed = abs(ratio / expected - 1.0) <= 0.35
    else:
        expected = 1.0
        passed = 0.8 <= ratio <= 1.25
    passed = bool(passed) and failure_rate < MAX_FAILURE_RATE

    report = DivergenceReport(
        mode=mode,
        process_kind=process.kind,
        n_small=n_small,
        n_large=n_large,
        replications=reps,
        tn_ratio=ratio,
        expected_ratio=expected,
        failures=failures,
        failure_rate=failure_rate,
        passed=passed,
        **summaries,
    )
    logger.info(f"发散性检查完成: T_n 中位数之比 {ratio:.4f}，通过={passed}")
    return report


# ---------------------------------------------------------------------------
# 预设实验
# ---------------------------------------------------------------------------

# 两段 GARCH(1,1) 的拟合参数，断点在 1061/2021
FITTED_GARCH_BEFORE = GarchSpec(omega=0.02461474, alpha=[0.06404848], beta=[0.87864088])
FITTED_GARCH_AFTER = GarchSpec(omega=0.09540076, alpha=[0.09734341], beta=[0.83945713])
FITTED_N = 2021
FITTED_BREAK = 1061

DEFAULT_PRESET_REPLICATIONS = {"garch_size": 300, "larch_power": 300, "null_cusum": 500}
FULL_REPLICATIONS = 1000


def preset_config(
    name: str,
    *,
    replications: Optional[int] = None,
    full: bool = False,
    master_seed: int = 0,
    workers: int = 1,
) -> McConfig:
    """预设实验配置

    - garch_size: 两段 GARCH(1,1) 的平方收益，检验规模
    - larch_power: LARCH(a=0.03, b0=0.25, d=0.35) 的平方收益，检验功效
    - null_cusum: iid 正态下 T_n 对 c(1) 的校准

    Args:
        name: 预设名
        replications: 指定重复次数（优先于 full）
        full: 使用 1000 次重复
        master_seed: 主种子
        workers: 线程数

    Raises:
        ValueError: 未知预设
    """
    if name not in DEFAULT_PRESET_REPLICATIONS:
        raise ValueError(f"未知的预设实验: {name}，可选 {sorted(DEFAULT_PRESET_REPLICATIONS)}")
    reps = replications or (FULL_REPLICATIONS if full else DEFAULT_PRESET_REPLICATIONS[name])
    common = {"replications": reps, "master_seed": master_seed, "workers": workers}
    if name == "garch_size":
        process = TwoRegimeGarchSpec(
            before=FITTED_GARCH_BEFORE, after=FITTED_GARCH_AFTER, theta=FITTED_BREAK / FITTED_N
        )
        return McConfig(n=FITTED_N, process=process, observable="square", statistic="split", **common)
    if name == "larch_power":
        process = LarchSpec(a=0.03, b0=0.25, d=0.35)
        return McConfig(n=FITTED_N, process=process, observable="square", statistic="split", **common)
    return McConfig(
        n=2000, alphas=[0.10, 0.05], process=IidNormalSpec(), statistic="cusum", **common
    )


class ExperimentService:
    """按统一的线程数和 fGn 上限执行实验"""

    def __init__(self, workers: int = 1, fgn_cap: int = DEFAULT_FGN_CAP):
        self.workers = workers
        self.fgn_cap = fgn_cap

    def run(self, config: McConfig) -> RejectionTable:
        update = {}
        if config.workers == 1 and self.workers > 1:
            update["workers"] = self.workers
        if config.fgn_cap == DEFAULT_FGN_CAP and self.fgn_cap != DEFAULT_FGN_CAP:
            update["fgn_cap"] = self.fgn_cap
        return rejection_table(config.model_copy(update=update) if update else config)

    def run_preset(self, name: str, *, replications: Optional[int] = None, full: bool = False,
                   master_seed: int = 0) -> RejectionTable:
        config = preset_config(
            name, replications=replications, full=full, master_seed=master_seed, workers=self.workers
        )
        return self.run(config)

    def consistency(self, process: ProcessSpec, n_grid: list[int], q_rule: Optional[BandwidthRule] = None,
                    reps: int = 100, master_seed: int = 0) -> ConsistencyReport:
        return bartlett_consistency(
            process, n_grid, q_rule, reps, master_seed, workers=self.workers, fgn_cap=self.fgn_cap
        )

    def divergence(self, process: AnySpec, n_small: int, n_large: int, reps: int = 100,
                   master_seed: int = 0) -> DivergenceReport:
        return divergence_check(
            process, n_small, n_large, reps, master_seed, workers=self.workers, fgn_cap=self.fgn_cap
        )

    def consistency_from_config(self, config: ConsistencyConfig) -> ConsistencyReport:
        return self.consistency(
            config.process, config.n_grid, config.bandwidth, config.replications, config.master_seed
        )

    def divergence_from_config(self, config: DivergenceConfig) -> DivergenceReport:
        return divergence_check(
            config.process, config.n_small, config.n_large, config.replications, config.master_seed,
            bandwidth=config.bandwidth, min_seg=config.min_seg, workers=self.workers, fgn_cap=self.fgn_cap,
        )

    def limit_functionals(self, config: LimitConfig) -> LimitFunctionalReport:
        return summarize_limit_functionals(config, fgn_cap=self.fgn_cap)
