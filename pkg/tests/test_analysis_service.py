"""数据读入、变换链、检验报告、诊断表与模拟文件测试"""
import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from pydantic import ValidationError

from models.process_models import FarimaSpec, FgnSpec, IidNormalSpec
from models.report_models import Pipeline
from models.stats_models import BandwidthRule
from services.analysis_service import apply_pipeline, load_spec, read_values
from services.asymptotics import critical_value, default_bandwidth
from services.exceptions import InputError, InvalidSeries, SegmentTooShort
from services.simulation_service import make_rng, simulate


class TestPipeline:
    def test_parse(self):
        pipeline = Pipeline.parse("prices,log_returns_pct,demean,square")
        assert pipeline.input_kind == "prices"
        assert pipeline.transforms == ("log_returns_pct", "demean", "square")
        assert pipeline.describe() == "prices→log_returns_pct→demean→square"

    def test_default_is_levels(self):
        assert Pipeline.parse("demean").input_kind == "levels"
        assert Pipeline.parse("levels").transforms == ()

    def test_square_prices_rejected(self):
        with pytest.raises(ValidationError):
            Pipeline.parse("prices,square")

    def test_unknown_step(self):
        with pytest.raises(ValidationError):
            Pipeline.parse("levels,detrend")


class TestApplyPipeline:
    def test_log_returns(self):
        result = apply_pipeline([100.0, 101.0], Pipeline.parse("prices,log_returns_pct"))
        assert_allclose(result, [100.0 * math.log(1.01)])
        assert result[0] == pytest.approx(0.9950330853168)

    def test_simple_returns(self):
        result = apply_pipeline([100.0, 110.0, 99.0], Pipeline.parse("prices,simple_returns_pct"))
        assert_allclose(result, [10.0, -10.0])

    def test_demean(self):
        assert_allclose(apply_pipeline([1.0, 2.0, 3.0], Pipeline.parse("demean")), [-1.0, 0.0, 1.0])

    def test_full_chain(self):
        prices = [100.0, 102.0, 101.0, 103.0]
        returns = 100.0 * np.diff(np.log(prices))
        expected = (returns - returns.mean()) ** 2
        result = apply_pipeline(prices, Pipeline.parse("prices,log_returns_pct,demean,square"))
        assert_allclose(result, expected)

    def test_single_value_returns(self):
        with pytest.raises(InputError):
            apply_pipeline([3.0], Pipeline.parse("prices,log_returns_pct"))

    def test_nonpositive_price(self):
        with pytest.raises(InputError) as exc_info:
            apply_pipeline([100.0, 0.0, 101.0], Pipeline.parse("prices,log_returns_pct"))
        assert exc_info.value.details["position"] == 2


class TestReadValues:
    def test_single_column_with_header(self, tmp_path):
        path = tmp_path / "series.txt"
        path.write_text("value\n1.5\n2\n\n-3e-1\n", encoding="utf-8")
        assert_array_equal(read_values(path, Pipeline()), [1.5, 2.0, -0.3])

    def test_without_header(self, tmp_path):
        path = tmp_path / "series.txt"
        path.write_text("1\n2\n3\n", encoding="utf-8")
        assert_array_equal(read_values(path, Pipeline()), [1.0, 2.0, 3.0])

    def test_forced_header(self, tmp_path):
        path = tmp_path / "series.txt"
        path.write_text("1\n2\n3\n", encoding="utf-8")
        assert_array_equal(read_values(path, Pipeline(header="yes")), [2.0, 3.0])

    def test_csv_by_name(self, tmp_path):
        path = tmp_path / "prices.csv"
        path.write_text("date,close\n2020-01-02,100\n2020-01-03,101.5\n", encoding="utf-8")
        assert_array_equal(read_values(path, Pipeline(column="close")), [100.0, 101.5])

    def test_csv_by_index(self, tmp_path):
        path = tmp_path / "values.csv"
        path.write_text("1,10\n2,20\n3,30\n", encoding="utf-8")
        assert_array_equal(read_values(path, Pipeline(column="1")), [10.0, 20.0, 30.0])

    def test_csv_requires_column(self, tmp_path):
        path = tmp_path / "prices.csv"
        path.write_text("date,close\n2020-01-02,100\n", encoding="utf-8")
        with pytest.raises(InputError):
            read_values(path, Pipeline())

    def test_unknown_column(self, tmp_path):
        path = tmp_path / "prices.csv"
        path.write_text("date,close\n2020-01-02,100\n", encoding="utf-8")
        with pytest.raises(InputError):
            read_values(path, Pipeline(column="open"))

    def test_bad_value_reports_line(self, tmp_path):
        path = tmp_path / "series.txt"
        path.write_text("1\n2\nabc\n4\n", encoding="utf-8")
        with pytest.raises(InputError) as exc_info:
            read_values(path, Pipeline())
        assert exc_info.value.details["line"] == 3

    def test_non_finite_value(self, tmp_path):
        path = tmp_path / "series.txt"
        path.write_text("1\ninf\n", encoding="utf-8")
        with pytest.raises(InputError) as exc_info:
            read_values(path, Pipeline())
        assert exc_info.value.details["line"] == 2

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            read_values(tmp_path / "missing.txt", Pipeline())

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.txt"
        path.write_text("", encoding="utf-8")
        with pytest.raises(InvalidSeries):
            read_values(path, Pipeline())

    def test_round_trip(self, rng, write_series):
        values = rng.standard_normal(200) * 1e3
        assert_array_equal(read_values(write_series(values), Pipeline()), values)


class TestSplitTestReport:
    def test_report_from_file_matches_inline(self, analysis_service, two_mean_series, write_series):
        path = write_series(two_mean_series)
        from_file = analysis_service.run_test(path, Pipeline())
        inline = analysis_service.test_series(two_mean_series, Pipeline())
        assert from_file.split == inline.split
        assert from_file.source == str(path)

    def test_report_fields(self, analysis_service, two_mean_series):
        report = analysis_service.test_series(two_mean_series, Pipeline())
        c2 = critical_value(2, 0.05)
        assert report.command == "test"
        assert report.n == 400
        assert report.critical_values == [c2]
        assert report.bandwidths == {"q1": report.split.q1, "q2": report.split.q2}
        assert 190 <= report.split.khat <= 210
        if report.split.mn > c2.value:
            assert report.verdict == "long_range_dependent"
        else:
            assert report.verdict == "changepoint_not_rejected"
            assert "change-point model not rejected" in report.summary

    def test_custom_parameters(self, analysis_service, two_mean_series):
        report = analysis_service.test_series(
            two_mean_series, Pipeline(), alpha=0.10, bandwidth=BandwidthRule(multiplier=5), min_seg=30
        )
        assert report.alpha == 0.10
        assert report.min_seg == 30
        assert report.split.q2 == default_bandwidth(400 - report.split.khat, BandwidthRule(multiplier=5))

    def test_short_series(self, analysis_service):
        with pytest.raises(SegmentTooShort):
            analysis_service.test_series(np.arange(30.0), Pipeline())


class TestSegmentationReport:
    def test_report(self, analysis_service):
        generator = np.random.default_rng(4)
        x = generator.standard_normal(600)
        x[300:] += 8.0
        report = analysis_service.segment_series(x, Pipeline(), alpha=0.001, max_changes=2)
        assert report.command == "segment"
        assert [c.u for c in report.critical_values] == [1, 2, 3]
        assert report.bandwidths == {"q_full": default_bandwidth(600)}
        assert report.segmentation.changepoints[0] == pytest.approx(300, abs=5)
        assert report.verdict == report.segmentation.verdict


class TestDiagnostics:
    def test_constant_series(self, analysis_service):
        table = analysis_service.diagnostics_series(np.full(64, 2.0), Pipeline(), max_lag=5)
        assert table.degenerate
        assert [row.autocorrelation for row in table.acf] == [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]

    def test_periodogram_peak(self, analysis_service):
        n = 128
        t = np.arange(n)
        x = np.cos(2.0 * np.pi * 8 * t / n)
        table = analysis_service.diagnostics_series(x, Pipeline(), max_lag=10, smoothing_window=1)
        assert len(table.periodogram) == n // 2
        peak = max(table.periodogram, key=lambda row: row.periodogram)
        assert peak.index == 8
        assert peak.frequency == pytest.approx(2.0 * np.pi * 8 / n)
        assert peak.periodogram == pytest.approx(n / (8.0 * np.pi))
        assert all(row.smoothed == pytest.approx(row.periodogram, abs=1e-9) for row in table.periodogram)

    def test_acf_and_smoothing(self, analysis_service, rng):
        x = rng.standard_normal(500)
        table = analysis_service.diagnostics_series(x, Pipeline(), max_lag=20, smoothing_window=5)
        assert table.acf[0].autocorrelation == pytest.approx(1.0)
        assert len(table.acf) == 21
        values = np.array([row.periodogram for row in table.periodogram])
        assert table.periodogram[10].smoothed == pytest.approx(values[8:13].mean())
        assert table.periodogram[0].smoothed == pytest.approx(values[:3].mean())
        assert table.periodogram[0].log10_periodogram == pytest.approx(math.log10(values[0]))

    def test_max_lag_too_large(self, analysis_service, rng):
        with pytest.raises(InputError):
            analysis_service.diagnostics_series(rng.standard_normal(50), Pipeline(), max_lag=50)

    @pytest.mark.slow
    def test_long_memory_low_frequency_slope(self, analysis_service):
        x = simulate(FarimaSpec(d=0.35), 2**16, make_rng(88))
        table = analysis_service.diagnostics_series(x, Pipeline(), max_lag=10)
        low = table.periodogram[: len(table.periodogram) // 20]
        slope = np.polyfit(
            [row.log10_frequency for row in low],
            [row.log10_periodogram for row in low],
            1,
        )[0]
        # 谱密度在零频附近 ~ λ^{-2d}
        assert slope == pytest.approx(-0.7, abs=0.2)

    @pytest.mark.parametrize("window", [0, 4])
    def test_invalid_window(self, analysis_service, rng, window):
        with pytest.raises(InputError):
            analysis_service.diagnostics_series(rng.standard_normal(50), Pipeline(), max_lag=5,
                                                smoothing_window=window)


class TestSimulationFiles:
    def test_output_and_sidecar(self, analysis_service, tmp_path):
        out = tmp_path / "sim" / "fgn.txt"
        values, record = analysis_service.run_simulation(FgnSpec(H=0.8, seed=3), 256, out=out)
        assert_array_equal(read_values(out, Pipeline()), values)
        meta = json.loads((tmp_path / "sim" / "fgn.txt.meta.json").read_text(encoding="utf-8"))
        assert meta["seed"] == 3
        assert meta["n"] == 256
        assert meta["spec"]["kind"] == "fgn"
        assert record.output == str(out)

    def test_same_seed_same_bytes(self, analysis_service, tmp_path):
        spec = IidNormalSpec(seed=11)
        first, second = tmp_path / "a.txt", tmp_path / "b.txt"
        analysis_service.run_simulation(spec, 100, out=first)
        analysis_service.run_simulation(spec, 100, out=second)
        assert first.read_bytes() == second.read_bytes()

    def test_seed_override(self, analysis_service):
        base, _ = analysis_service.run_simulation(IidNormalSpec(seed=1), 50)
        override, record = analysis_service.run_simulation(IidNormalSpec(seed=1), 50, seed=2)
        assert record.seed == 2
        assert not np.array_equal(base, override)

    def test_load_spec(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps({"kind": "garch", "omega": 0.1, "alpha": [0.1], "beta": [0.8]}))
        spec = load_spec(path)
        assert spec.kind == "garch"
        assert spec.unconditional_variance == pytest.approx(1.0)

    def test_load_invalid_spec(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text(json.dumps({"kind": "garch", "omega": 0.1, "alpha": [0.6], "beta": [0.6]}))
        with pytest.raises(ValidationError):
            load_spec(path)


class TestBandwidthCheck:
    def test_default_rule(self, analysis_service):
        report = analysis_service.check_bandwidth(H=0.85)
        assert report.passed
        assert report.rule.multiplier == 15
