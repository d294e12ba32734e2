"""分析服务：读入数据、执行检验与分段、诊断表、模拟文件

CLI 和 HTTP 接口都通过 AnalysisService 调用统计模块，报告格式完全一致。
"""
import logging
import math
from pathlib import Path
from typing import Optional, Union

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike
from pydantic import TypeAdapter

from config import Settings, get_settings
from models.process_models import AnySpec, ChangePointModelSpec
from models.report_models import (
    AcfRow,
    DiagnosticsTable,
    PeriodogramRow,
    Pipeline,
    Report,
    SimulationRecord,
)
from models.stats_models import BandwidthReport, BandwidthRule
from services.asymptotics import critical_value, validate_bandwidth_rule
from services.exceptions import InputError, InvalidSeries
from services.segmentation_service import multistage_classify
from services.simulation_service import make_rng, simulate, simulation_metadata
from services.stats_core import Series, as_series, sample_autocovariances, split_statistics

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

SPEC_ADAPTER: TypeAdapter = TypeAdapter(AnySpec)


# ---------------------------------------------------------------------------
# 数据读入与变换
# ---------------------------------------------------------------------------

def _to_float(text: str) -> float:
    """按 Python 的 float 解析（与 %.17g 输出逐位往返），失败时返回 nan"""
    try:
        return float(text)
    except (TypeError, ValueError):
        return math.nan


def _is_number(text: str) -> bool:
    return not math.isnan(_to_float(text))


def _select_column(frame: pd.DataFrame, column: Optional[Union[int, str]], names: Optional[list[str]]) -> int:
    if column is None:
        if frame.shape[1] != 1:
            raise InputError(
                f"文件有 {frame.shape[1]} 列，请用 --column 指定要读取的列",
                details={"columns": names or list(range(frame.shape[1]))},
            )
        return 0
    if isinstance(column, int) or (isinstance(column, str) and column.isdigit()):
        index = int(column)
        if not 0 <= index < frame.shape[1]:
            raise InputError(f"列下标 {index} 超出范围（共 {frame.shape[1]} 列）")
        return index
    if not names or column not in names:
        raise InputError(f"找不到列 {column!r}", details={"columns": names or []})
    return names.index(column)


def read_values(path: PathLike, pipeline: Pipeline) -> Series:
    """读入一列数值（逗号分隔或单列文本），不做变换

    表头自动识别：选中列的第一行不是数字即视为表头。小数点固定为 "."。

    Raises:
        InputError: 文件不存在、列不存在、某行无法解析（带行号）
        InvalidSeries: 没有数据
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"文件不存在: {path}", details={"path": str(path)})
    try:
        frame = pd.read_csv(
            path, header=None, dtype=str, keep_default_na=False,
            skip_blank_lines=False, skipinitialspace=True,
        )
    except pd.errors.EmptyDataError as e:
        raise InvalidSeries(f"文件为空: {path}") from e
    except pd.errors.ParserError as e:
        raise InputError(f"CSV 解析失败: {e}", details={"path": str(path)}) from e

    frame = frame.fillna("").apply(lambda col: col.str.strip())
    # 下标改为文件中的行号（从 1 开始）
    frame.index = pd.RangeIndex(1, len(frame) + 1)
    frame = frame[~frame.eq("").all(axis=1)]
    if frame.empty:
        raise InvalidSeries(f"文件中没有数据: {path}")

    column = pipeline.column
    by_name = isinstance(column, str) and not column.isdigit()
    if pipeline.header == "auto":
        # 按列名选择时必然有表头
        has_header = by_name or not _is_number(frame.iloc[0, _select_column(frame, column, None)])
    else:
        has_header = pipeline.header == "yes"
    names: Optional[list[str]] = None
    if has_header:
        names = list(frame.iloc[0])
        frame = frame.iloc[1:]

    index = _select_column(frame, column, names)
    raw = frame.iloc[:, index]
    values = raw.map(_to_float).astype(np.float64)
    bad = ~np.isfinite(values.to_numpy(dtype=np.float64))
    if bad.any():
        line = int(values.index[bad][0])
        raise InputError(
            f"第 {line} 行无法解析为有限实数: {raw.loc[line]!r}",
            details={"path": str(path), "line": line, "value": raw.loc[line]},
        )
    if values.empty:
        raise InvalidSeries(f"文件中没有数据: {path}")
    return values.to_numpy(dtype=np.float64)


def apply_pipeline(values: ArrayLike, pipeline: Pipeline) -> Series:
    """按顺序执行变换

    - log_returns_pct: 100·ln(p_t / p_{t-1})
    - simple_returns_pct: 100·(p_t / p_{t-1} - 1)
    - demean: 减去样本均值
    - square: 逐点平方

    Raises:
        InputError: 收益率变换需要至少两行，对数收益率要求价格为正
        InvalidSeries: 输入为空或含非有限值
    """
    x = np.array(as_series(values), dtype=np.float64)
    for step in pipeline.transforms:
        if step in ("log_returns_pct", "simple_returns_pct"):
            if x.size < 2:
                raise InputError(f"{step} 至少需要两行数据，当前 {x.size} 行")
            if step == "log_returns_pct":
                if np.any(x <= 0):
                    position = int(np.argmax(x <= 0))
                    raise InputError(
                        f"对数收益率要求价格为正，第 {position + 1} 个值为 {x[position]}",
                        details={"position": position + 1},
                    )
                x = 100.0 * np.diff(np.log(x))
            else:
                if np.any(x[:-1] == 0):
                    raise InputError("简单收益率要求前一期价格非零")
                x = 100.0 * (x[1:] / x[:-1] - 1.0)
        elif step == "demean":
            x = x - x.mean()
        elif step == "square":
            x = x * x
    return as_series(x)


def load_series(path: PathLike, pipeline: Pipeline) -> Series:
    """读入文件并执行变换链"""
    series = apply_pipeline(read_values(path, pipeline), pipeline)
    logger.info(f"读入 {path}: {series.size} 个观测，变换链 {pipeline.describe()}")
    return series


def load_spec(path: PathLike) -> AnySpec:
    """读入过程参数 JSON 文件

    Raises:
        InputError: 文件不存在
        pydantic.ValidationError: 参数不合法（带字段路径）
    """
    path = Path(path)
    if not path.is_file():
        raise InputError(f"文件不存在: {path}", details={"path": str(path)})
    return SPEC_ADAPTER.validate_json(path.read_text(encoding="utf-8"))


def with_seed(spec: AnySpec, seed: int) -> AnySpec:
    """替换过程的种子（变点模型替换其噪声过程的种子）"""
    if isinstance(spec, ChangePointModelSpec):
        return spec.model_copy(update={"innovation": spec.innovation.model_copy(update={"seed": seed})})
    return spec.model_copy(update={"seed": seed})


def format_values(values: ArrayLike) -> str:
    """每行一个值，17 位有效数字，读回后逐位相同"""
    return "".join(f"{v:.17g}\n" for v in np.asarray(values, dtype=np.float64))


# ---------------------------------------------------------------------------
# 服务
# ---------------------------------------------------------------------------

class AnalysisService:
    """检验、分段、诊断和模拟的统一入口"""

    def __init__(self, settings: Optional[Settings] = None):
        self.settings = settings or get_settings()

    def _rule(self, bandwidth: Optional[BandwidthRule]) -> BandwidthRule:
        return bandwidth or BandwidthRule(multiplier=self.settings.bandwidth_multiplier)

    # -- 检验 -------------------------------------------------------------

    def test_series(
        self,
        series: ArrayLike,
        pipeline: Pipeline,
        alpha: Optional[float] = None,
        bandwidth: Optional[BandwidthRule] = None,
        min_seg: Optional[int] = None,
        *,
        source: str = "inline",
        seed: Optional[int] = None,
    ) -> Report:
        """对已变换的序列计算 M_n 并与 c(2) 比较"""
        alpha = alpha if alpha is not None else self.settings.alpha
        min_seg = min_seg if min_seg is not None else self.settings.min_seg
        rule = self._rule(bandwidth)
        x = as_series(series, min_length=2)

        split = split_statistics(x, rule, min_seg)
        c2 = critical_value(2, alpha)
        reject = split.mn > c2.value
        if reject:
            verdict = "long_range_dependent"
            summary = f"M_n = {split.mn:.6f} > c(2) = {c2.value:.6f}: change-point model rejected"
        else:
            verdict = "changepoint_not_rejected"
            summary = f"M_n = {split.mn:.6f} <= c(2) = {c2.value:.6f}: change-point model not rejected"
        logger.info(f"检验完成: n={x.size}, k̂={split.khat}, M_n={split.mn:.6f}, c(2)={c2.value:.6f}")

        return Report(
            command="test",
            source=source,
            n=x.size,
            pipeline=pipeline,
            pipeline_chain=pipeline.describe(),
            bandwidth=rule,
            min_seg=min_seg,
            alpha=alpha,
            bandwidths={"q1": split.q1, "q2": split.q2},
            split=split,
            critical_values=[c2],
            verdict=verdict,
            summary=summary,
            seed=seed,
        )

    def run_test(
        self,
        path: PathLike,
        pipeline: Pipeline,
        alpha: Optional[float] = None,
        bandwidth: Optional[BandwidthRule] = None,
        min_seg: Optional[int] = None,
    ) -> Report:
        """读入文件、执行变换链并做检验"""
        return self.test_series(load_series(path, pipeline), pipeline, alpha, bandwidth, min_seg, source=str(path))

    # -- 分段 -------------------------------------------------------------

    def segment_series(
        self,
        series: ArrayLike,
        pipeline: Pipeline,
        alpha: Optional[float] = None,
        max_changes: int = 2,
        bandwidth: Optional[BandwidthRule] = None,
        min_seg: Optional[int] = None,
        *,
        source: str = "inline",
    ) -> Report:
        """多阶段分段，报告中带完整的阶段记录"""
        alpha = alpha if alpha is not None else self.settings.alpha
        min_seg = min_seg if min_seg is not None else self.settings.min_seg
        rule = self._rule(bandwidth)
        x = as_series(series, min_length=2)

        result = multistage_classify(x, max_changes, alpha, rule, min_seg)
        critical_values = [critical_value(u, alpha) for u in range(1, max_changes + 2)]
        return Report(
            command="segment",
            source=source,
            n=x.size,
            pipeline=pipeline,
            pipeline_chain=pipeline.describe(),
            bandwidth=rule,
            min_seg=min_seg,
            alpha=alpha,
            bandwidths={"q_full": result.trace[0].segments[0].q},
            critical_values=critical_values,
            verdict=result.verdict,
            summary=result.describe(),
            segmentation=result,
        )

    def run_segmentation(
        self,
        path: PathLike,
        pipeline: Pipeline,
        alpha: Optional[float] = None,
        max_changes: int = 2,
        bandwidth: Optional[BandwidthRule] = None,
        min_seg: Optional[int] = None,
    ) -> Report:
        return self.segment_series(
            load_series(path, pipeline), pipeline, alpha, max_changes, bandwidth, min_seg, source=str(path)
        )

    # -- 诊断 -------------------------------------------------------------

    def diagnostics_series(
        self,
        series: ArrayLike,
        pipeline: Pipeline,
        max_lag: Optional[int] = None,
        smoothing_window: Optional[int] = None,
        *,
        source: str = "inline",
    ) -> DiagnosticsTable:
        """样本自相关 γ̂_j/γ̂_0 与周期图 |Σ x_t e^{-itλ_j}|²/(2πn)

        平滑周期图是窗口居中的移动平均，两端使用不完整窗口。
        常数序列的自相关按 0/0 = 0 处理并标记 degenerate。

        Raises:
            InputError: max_lag ≥ n，或窗口不是正奇数
        """
        max_lag = max_lag if max_lag is not None else self.settings.max_lag
        window = smoothing_window if smoothing_window is not None else self.settings.smoothing_window
        x = as_series(series, min_length=2)
        n = x.size
        if not 0 <= max_lag < n:
            raise InputError(f"max_lag 必须在 [0, n) 内: max_lag={max_lag}, n={n}")
        if window < 1 or window % 2 == 0:
            raise InputError(f"平滑窗口必须是正奇数: {window}")

        gammas = sample_autocovariances(x, max_lag)
        degenerate = bool(gammas[0] <= 0.0)
        if degenerate:
            logger.warning("序列为常数，自相关按 0 处理")
            acf = np.zeros(max_lag + 1)
            acf[0] = 1.0
        else:
            acf = gammas / gammas[0]

        m = n // 2
        j = np.arange(1, m + 1)
        periodogram = np.abs(np.fft.rfft(x)[1:m + 1]) ** 2 / (2.0 * math.pi * n)
        frame = pd.DataFrame({
            "index": j,
            "frequency": 2.0 * math.pi * j / n,
            "periodogram": periodogram,
        })
        frame["smoothed"] = frame["periodogram"].rolling(window, center=True, min_periods=1).mean()
        frame["log10_frequency"] = np.log10(frame["frequency"])
        for column in ("periodogram", "smoothed"):
            positive = frame[column].where(frame[column] > 0)
            frame[f"log10_{column}"] = np.log10(positive)
        records = frame.astype(object).where(frame.notna(), None).to_dict("records")

        return DiagnosticsTable(
            source=source,
            n=n,
            pipeline_chain=pipeline.describe(),
            max_lag=max_lag,
            smoothing_window=window,
            degenerate=degenerate,
            acf=[AcfRow(lag=lag, autocorrelation=float(v)) for lag, v in enumerate(acf)],
            periodogram=[PeriodogramRow(**record) for record in records],
        )

    def diagnostics(
        self,
        path: PathLike,
        pipeline: Pipeline,
        max_lag: Optional[int] = None,
        smoothing_window: Optional[int] = None,
    ) -> DiagnosticsTable:
        return self.diagnostics_series(
            load_series(path, pipeline), pipeline, max_lag, smoothing_window, source=str(path)
        )

    # -- 模拟 -------------------------------------------------------------

    def simulate_series(self, spec: AnySpec, n: int, seed: Optional[int] = None) -> tuple[Series, AnySpec]:
        """按过程参数模拟；给出 seed 时覆盖参数中的种子"""
        if n < 1:
            raise InputError(f"n 必须 ≥ 1: {n}")
        if seed is not None:
            spec = with_seed(spec, seed)
        values = simulate(spec, n, make_rng(spec.seed), fgn_cap=self.settings.fgn_cap)
        return values, spec

    def run_simulation(
        self,
        spec: AnySpec,
        n: int,
        seed: Optional[int] = None,
        out: Optional[PathLike] = None,
    ) -> tuple[Series, SimulationRecord]:
        """模拟并写出每行一个值的文件，元数据写到 <out>.meta.json

        Args:
            spec: 过程参数
            n: 长度
            seed: 覆盖参数中的种子
            out: 输出文件，None 时只返回数据

        Returns:
            (模拟值, 元数据)
        """
        values, spec = self.simulate_series(spec, n, seed)
        record = SimulationRecord(
            spec=spec.model_dump(mode="json"),
            n=n,
            seed=spec.seed,
            output=str(out) if out is not None else None,
            metadata=simulation_metadata(spec, n),
        )
        if out is not None:
            out = Path(out)
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(format_values(values), encoding="utf-8", newline="\n")
            Path(f"{out}.meta.json").write_text(record.model_dump_json(indent=2), encoding="utf-8")
            logger.info(f"模拟结果已写入 {out}（{n} 个值，种子 {spec.seed}）")
        return values, record

    # -- 带宽 -------------------------------------------------------------

    def check_bandwidth(
        self,
        rule: Optional[BandwidthRule] = None,
        H: Optional[float] = None,
        n_max: int = 2**40,
    ) -> BandwidthReport:
        report = validate_bandwidth_rule(self._rule(rule), H, n_max)
        if not report.passed:
            failed = [c.condition for c in report.checks if not c.passed]
            logger.warning(f"带宽规则 {report.rule.describe()} 未通过: {failed}")
        return report
