"""命令行入口

子命令：test / segment / simulate / mc / diag / bandwidth-check。
退出码：0 成功（无论结论如何），1 输入错误，2 计算错误。
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import pandas as pd
from dotenv import load_dotenv
from pydantic import BaseModel, ValidationError

from config import (
    DEFAULT_ALPHA,
    DEFAULT_BANDWIDTH_MULTIPLIER,
    DEFAULT_MIN_SEG,
    Settings,
    load_settings,
)
from log_config import setup_logging
from models.experiment_models import (
    ConsistencyConfig,
    DivergenceConfig,
    LimitConfig,
    McConfig,
    RejectionTable,
)
from models.report_models import DiagnosticsTable, Pipeline, Report
from models.stats_models import BandwidthReport, BandwidthRule
from services.analysis_service import AnalysisService, format_values, load_spec
from services.exceptions import AnalysisError, InputError
from services.experiment_service import DEFAULT_PRESET_REPLICATIONS, ExperimentService

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_COMPUTATION_ERROR = 2


# ---------------------------------------------------------------------------
# 参数
# ---------------------------------------------------------------------------

def _add_output_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", help="输出文件（默认写到 LRD_REPORT_DIR，未设置时打印到标准输出）")
    parser.add_argument(
        "--format", choices=("text", "structured"), default="text",
        help="text 为可读文本，structured 为 JSON 文档",
    )


def _add_series_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("file", help="数据文件（逗号分隔或单列文本）")
    parser.add_argument(
        "--pipeline", default="levels",
        help="变换链，如 prices,log_returns_pct,demean,square（默认 levels）",
    )
    parser.add_argument("--column", help="列名或从 0 开始的列下标")
    parser.add_argument("--header", choices=("auto", "yes", "no"), default="auto")


def _add_test_options(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--alpha", type=float, default=None, help=f"显著性水平（默认 {DEFAULT_ALPHA}）")
    parser.add_argument(
        "--bandwidth-mult", type=float, default=None,
        help=f"带宽 q(n) = ⌊c·log10 n⌋ 中的 c（默认 {DEFAULT_BANDWIDTH_MULTIPLIER:g}）",
    )
    parser.add_argument("--min-seg", type=int, default=None, help=f"最小分段长度（默认 {DEFAULT_MIN_SEG}）")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lrd-changepoint",
        description="区分均值变点与长程相依的 CUSUM 检验",
    )
    parser.add_argument("--log-level", default=None, help="日志级别（默认读取 LOG_LEVEL）")
    subparsers = parser.add_subparsers(dest="command", required=True)

    test = subparsers.add_parser("test", help="M_n 检验：变点模型 vs 长程相依")
    _add_series_options(test)
    _add_test_options(test)
    _add_output_options(test)

    segment = subparsers.add_parser("segment", help="多阶段二分分段")
    _add_series_options(segment)
    _add_test_options(segment)
    segment.add_argument("--max-changes", type=int, default=2, help="变点个数上限 K（默认 2）")
    _add_output_options(segment)

    simulate = subparsers.add_parser("simulate", help="按 JSON 过程参数模拟序列")
    simulate.add_argument("spec", help="过程参数 JSON 文件")
    simulate.add_argument("--n", type=int, required=True, help="序列长度")
    simulate.add_argument("--seed", type=int, default=None, help="覆盖参数文件中的种子")
    simulate.add_argument("--out", help="输出文件，元数据写到 <out>.meta.json")

    mc = subparsers.add_parser("mc", help="Monte Carlo 实验")
    source = mc.add_mutually_exclusive_group(required=True)
    source.add_argument("--preset", choices=sorted(DEFAULT_PRESET_REPLICATIONS), help="预设实验")
    source.add_argument("--config", help="实验配置 JSON 文件")
    mc.add_argument(
        "--experiment", choices=("rejection", "consistency", "divergence", "limit"), default="rejection",
        help="配置文件对应的实验类型（默认 rejection）",
    )
    mc.add_argument("--full", action="store_true", help="预设实验使用 1000 次重复")
    mc.add_argument("--replications", type=int, default=None, help="覆盖重复次数")
    mc.add_argument("--seed", type=int, default=None, help="主种子")
    mc.add_argument("--workers", type=int, default=1, help="线程数（不影响结果）")
    _add_output_options(mc)

    diag = subparsers.add_parser("diag", help="自相关与周期图诊断表")
    _add_series_options(diag)
    diag.add_argument("--max-lag", type=int, default=None, help="最大滞后（默认 100）")
    diag.add_argument("--window", type=int, default=None, help="周期图平滑窗口，正奇数（默认 21）")
    _add_output_options(diag)

    bandwidth = subparsers.add_parser("bandwidth-check", help="在倍增网格上检查带宽条件")
    bandwidth.add_argument("--bandwidth-mult", type=float, default=None)
    bandwidth.add_argument("--form", choices=("log10", "power"), default="log10")
    bandwidth.add_argument("--beta", type=float, default=0.5, help="power 形式的指数")
    bandwidth.add_argument("--hurst", type=float, default=None, help="检查长程相依条件时的 H")
    bandwidth.add_argument("--n-max", type=int, default=2**40)
    _add_output_options(bandwidth)

    return parser


# ---------------------------------------------------------------------------
# 文本输出
# ---------------------------------------------------------------------------

def render_report(report: Report) -> str:
    lines = [
        f"command: {report.command}",
        f"source: {report.source}",
        f"n: {report.n}",
        f"pipeline: {report.pipeline_chain}",
        f"bandwidth: {report.bandwidth.describe()}, min_seg {report.min_seg}",
        f"alpha: {report.alpha:g}",
    ]
    if report.split is not None:
        s = report.split
        lines += [
            f"khat: {s.khat}",
            f"T_n1: {s.t1:.6f}  s_n1: {s.s1:.6f}  q1: {s.q1}",
            f"T_n2: {s.t2:.6f}  s_n2: {s.s2:.6f}  q2: {s.q2}",
            f"M_n: {s.mn:.6f}",
        ]
    lines.append("critical values: " + ", ".join(f"c({c.u}) = {c.value:.6f}" for c in report.critical_values))
    if report.segmentation is not None:
        for stage in report.segmentation.trace:
            line = (
                f"stage {stage.stage}: max T = {stage.statistic:.6f} vs c({stage.stage}) = "
                f"{stage.critical_value:.6f} -> {stage.decision}"
            )
            if stage.split is not None:
                line += f", split at {stage.split.khat_local}"
            if stage.flag:
                line += f" [{stage.flag}]"
            lines.append(line)
        lines.append(f"changepoints: {report.segmentation.changepoints}")
    lines += [f"verdict: {report.verdict}", report.summary]
    return "\n".join(lines) + "\n"


def render_rejection_table(table: RejectionTable) -> str:
    frame = pd.DataFrame([row.model_dump() for row in table.rows])
    lines = [
        f"process: {table.metadata.get('kind')}, n = {table.n}, replications = {table.replications}, "
        f"seed = {table.master_seed}",
        f"statistic: {table.statistic} vs c({table.critical_u}), observable: {table.observable}",
        frame.to_string(index=False),
        f"failures: {table.failures} ({table.failure_rate:.2%}) {table.failure_kinds or ''}".rstrip(),
    ]
    return "\n".join(lines) + "\n"


def render_diagnostics(table: DiagnosticsTable) -> str:
    acf = pd.DataFrame([row.model_dump() for row in table.acf])
    periodogram = pd.DataFrame([row.model_dump() for row in table.periodogram])
    lines = [
        f"source: {table.source}, n = {table.n}, pipeline: {table.pipeline_chain}",
        f"degenerate: {table.degenerate}",
        "# autocorrelation",
        acf.to_string(index=False),
        f"# periodogram (smoothing window {table.smoothing_window})",
        periodogram.to_string(index=False),
    ]
    return "\n".join(lines) + "\n"


def render_bandwidth(report: BandwidthReport) -> str:
    lines = [f"rule: {report.rule.describe()}, n_max = {report.n_max}, H = {report.H}"]
    for check in report.checks:
        lines.append(f"{'PASS' if check.passed else 'FAIL'} {check.condition}: {check.detail}")
    lines.append(f"passed: {report.passed}")
    return "\n".join(lines) + "\n"


def render_generic(document: BaseModel) -> str:
    return json.dumps(document.model_dump(mode="json"), indent=2, ensure_ascii=False) + "\n"


RENDERERS = {
    Report: render_report,
    RejectionTable: render_rejection_table,
    DiagnosticsTable: render_diagnostics,
    BandwidthReport: render_bandwidth,
}


def emit(document: BaseModel, args: argparse.Namespace, settings: Settings, default_name: str) -> None:
    """按 --format 渲染，写到 --out、LRD_REPORT_DIR 或标准输出"""
    if args.format == "structured":
        content = document.model_dump_json(indent=2) + "\n"
        suffix = ".json"
    else:
        content = RENDERERS.get(type(document), render_generic)(document)
        suffix = ".txt"

    target: Optional[Path] = None
    if args.out:
        target = Path(args.out)
    elif settings.report_dir:
        target = Path(settings.report_dir) / f"{default_name}{suffix}"
    if target is None:
        sys.stdout.write(content)
        return
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(content, encoding="utf-8")
    logger.info(f"结果已写入 {target}")


# ---------------------------------------------------------------------------
# 子命令
# ---------------------------------------------------------------------------

def _pipeline(args: argparse.Namespace) -> Pipeline:
    try:
        return Pipeline.parse(args.pipeline, column=args.column, header=args.header)
    except ValidationError as e:
        raise InputError(f"变换链不合法: {args.pipeline}", details={"errors": _errors(e)}) from e


def _rule(multiplier: Optional[float], settings: Settings, **kwargs) -> BandwidthRule:
    if multiplier is None:
        multiplier = settings.bandwidth_multiplier
    return BandwidthRule(multiplier=multiplier, **kwargs)


def _stem(path: str) -> str:
    return Path(path).stem


def cmd_test(args: argparse.Namespace, settings: Settings) -> int:
    service = AnalysisService(settings)
    report = service.run_test(
        args.file, _pipeline(args), args.alpha, _rule(args.bandwidth_mult, settings), args.min_seg
    )
    emit(report, args, settings, f"test-{_stem(args.file)}")
    return EXIT_OK


def cmd_segment(args: argparse.Namespace, settings: Settings) -> int:
    service = AnalysisService(settings)
    report = service.run_segmentation(
        args.file, _pipeline(args), args.alpha, args.max_changes,
        _rule(args.bandwidth_mult, settings), args.min_seg,
    )
    emit(report, args, settings, f"segment-{_stem(args.file)}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace, settings: Settings) -> int:
    service = AnalysisService(settings)
    spec = load_spec(args.spec)
    out = args.out
    if out is None and settings.report_dir:
        seed = args.seed if args.seed is not None else spec.seed
        out = str(Path(settings.report_dir) / f"simulated-{spec.kind}-{seed}.txt")
    values, _ = service.run_simulation(spec, args.n, args.seed, out)
    if out is None:
        sys.stdout.write(format_values(values))
    return EXIT_OK


def _read_config(path: str, model: type[BaseModel], overrides: dict) -> BaseModel:
    """读入实验配置，命令行参数覆盖文件中的同名字段后重新校验"""
    config_path = Path(path)
    if not config_path.is_file():
        raise InputError(f"文件不存在: {config_path}")
    data = json.loads(config_path.read_text(encoding="utf-8"))
    return model.model_validate({**data, **overrides})


def cmd_mc(args: argparse.Namespace, settings: Settings) -> int:
    service = ExperimentService(workers=args.workers, fgn_cap=settings.fgn_cap)
    seed = args.seed if args.seed is not None else 0
    if args.preset:
        result: BaseModel = service.run_preset(
            args.preset, replications=args.replications, full=args.full, master_seed=seed
        )
        emit(result, args, settings, f"mc-{args.preset}")
        return EXIT_OK

    overrides = {}
    if args.replications is not None:
        overrides["replications"] = args.replications
    if args.seed is not None:
        overrides["master_seed"] = args.seed

    if args.experiment == "rejection":
        config = _read_config(args.config, McConfig, overrides)
        result = service.run(config)
    elif args.experiment == "consistency":
        result = service.consistency_from_config(
            _read_config(args.config, ConsistencyConfig, overrides)
        )
    elif args.experiment == "divergence":
        result = service.divergence_from_config(
            _read_config(args.config, DivergenceConfig, overrides)
        )
    else:
        result = service.limit_functionals(_read_config(args.config, LimitConfig, overrides))
    emit(result, args, settings, f"mc-{args.experiment}-{_stem(args.config)}")
    return EXIT_OK


def cmd_diag(args: argparse.Namespace, settings: Settings) -> int:
    service = AnalysisService(settings)
    table = service.diagnostics(args.file, _pipeline(args), args.max_lag, args.window)
    emit(table, args, settings, f"diag-{_stem(args.file)}")
    return EXIT_OK


def cmd_bandwidth_check(args: argparse.Namespace, settings: Settings) -> int:
    service = AnalysisService(settings)
    rule = _rule(args.bandwidth_mult, settings, form=args.form, beta=args.beta)
    report = service.check_bandwidth(rule, args.hurst, args.n_max)
    emit(report, args, settings, "bandwidth-check")
    return EXIT_OK


COMMANDS = {
    "test": cmd_test,
    "segment": cmd_segment,
    "simulate": cmd_simulate,
    "mc": cmd_mc,
    "diag": cmd_diag,
    "bandwidth-check": cmd_bandwidth_check,
}


# ---------------------------------------------------------------------------
# 入口
# ---------------------------------------------------------------------------

def _errors(error: ValidationError) -> list[dict]:
    return [{"loc": list(e["loc"]), "msg": e["msg"], "type": e["type"]} for e in error.errors()]


def _report_error(args: argparse.Namespace, payload: dict) -> None:
    if getattr(args, "format", "text") == "structured":
        sys.stderr.write(json.dumps(payload, indent=2, ensure_ascii=False) + "\n")
    else:
        sys.stderr.write(f"error [{payload['error']}]: {payload['message']}\n")
        for item in payload.get("details", {}).get("errors", []):
            sys.stderr.write(f"  {'.'.join(str(p) for p in item['loc'])}: {item['msg']}\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv(".env.local")
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = load_settings()
    setup_logging(args.log_level or settings.log_level)

    try:
        return COMMANDS[args.command](args, settings)
    except AnalysisError as e:
        logger.error(f"{e.kind}: {e.message}")
        _report_error(args, e.to_dict())
        return e.exit_code
    except ValidationError as e:
        logger.error(f"参数校验失败: {e.error_count()} 处错误")
        _report_error(args, {
            "error": "validation_error",
            "message": f"{e.title} 校验失败",
            "details": {"errors": _errors(e)},
        })
        return EXIT_INPUT_ERROR
    except ValueError as e:
        logger.error(f"参数错误: {e}")
        _report_error(args, {"error": "input_error", "message": str(e), "details": {}})
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
