"""多阶段分段测试"""
import numpy as np
import pytest

from models.stats_models import BandwidthRule
from services.asymptotics import critical_value, default_bandwidth
from services.exceptions import SegmentTooShort
from services.segmentation_service import SegmentationService, multistage_classify, segment_test
from services.simulation_service import make_rng
from services.stats_core import changepoint_estimator, cusum_statistic


class TestSegmentTest:
    def test_full_range_matches_full_statistic(self, rng):
        x = rng.standard_normal(300)
        x[100:] += 1.0
        result = segment_test(x, 0, 300, BandwidthRule())
        assert result.t_stat == pytest.approx(cusum_statistic(x, default_bandwidth(300)))
        assert result.khat_local == changepoint_estimator(x)
        assert result.q == default_bandwidth(300)

    def test_uses_only_its_own_data(self, rng):
        x = rng.standard_normal(400)
        before = segment_test(x, 100, 300, BandwidthRule())
        y = x.copy()
        y[:100] = 1e6
        y[300:] = -1e6
        after = segment_test(y, 100, 300, BandwidthRule())
        assert after == before

    def test_absolute_changepoint(self):
        generator = np.random.default_rng(3)
        x = generator.standard_normal(400) * 0.1
        x[250:] += 2.0
        result = segment_test(x, 100, 400, BandwidthRule())
        assert result.khat_local == 250

    def test_too_short(self, rng):
        with pytest.raises(SegmentTooShort):
            segment_test(rng.standard_normal(100), 0, 15, BandwidthRule())

    def test_invalid_bounds(self, rng):
        with pytest.raises(ValueError):
            segment_test(rng.standard_normal(100), 50, 40, BandwidthRule())


class TestMultistageClassify:
    def test_constant_series_is_degenerate(self):
        result = multistage_classify(np.full(200, 3.0), max_changes=2)
        assert result.verdict == "weakly_dependent"
        assert result.n_changes == 0
        assert result.trace[0].flag == "degenerate"
        assert result.trace[0].segments[0].degenerate

    def test_clean_level_shift(self):
        x = np.concatenate((np.zeros(200), np.ones(200)))
        result = multistage_classify(x, max_changes=2)
        assert result.verdict == "weakly_dependent"
        assert result.n_changes == 1
        assert result.changepoints == [200]
        children = result.trace[-1].segments
        assert [(s.lo, s.hi) for s in children] == [(0, 200), (200, 400)]
        assert all(s.degenerate and s.t_stat == 0.0 and not s.splittable for s in children)

    def test_constant_left_child(self):
        generator = np.random.default_rng(17)
        x = np.concatenate((np.full(300, 5.0), 20.0 + generator.standard_normal(300)))
        result = multistage_classify(x, max_changes=2)
        assert result.changepoints[0] == 300
        left = result.trace[1].segments[0]
        assert (left.lo, left.hi) == (0, 300)
        assert left.degenerate
        assert not result.trace[1].segments[1].degenerate

    def test_two_changes(self):
        # 默认带宽 ⌊15·log10 n⌋ 下 s_n² 会吸收均值跳变，这里用较小的带宽乘子
        generator = np.random.default_rng(2024)
        x = generator.standard_normal(1200)
        x[400:800] += 8.0
        result = multistage_classify(x, max_changes=2, alpha=0.001, bandwidth=BandwidthRule(multiplier=2.0))
        assert result.verdict == "weakly_dependent"
        assert result.n_changes == 2
        assert abs(result.changepoints[0] - 400) <= 48
        assert abs(result.changepoints[1] - 800) <= 48
        assert [stage.decision for stage in result.trace] == ["reject", "reject", "accept"]

    def test_stage_critical_values(self):
        generator = np.random.default_rng(8)
        x = generator.standard_normal(500)
        x[250:] += 4.0
        result = multistage_classify(x, max_changes=1, alpha=0.05)
        assert len(result.trace) <= 2
        for stage in result.trace:
            assert stage.critical_value == critical_value(stage.stage, 0.05).value
        assert result.trace[0].decision == "reject"
        assert result.trace[0].split is not None

    def test_trend_exhausts_stages(self):
        generator = np.random.default_rng(5)
        x = np.linspace(0.0, 1.0, 4000) + 0.001 * generator.standard_normal(4000)
        result = multistage_classify(x, max_changes=1)
        assert result.verdict == "long_range_dependent"
        assert result.n_changes is None
        assert result.trace[-1].flag == "max_changes_reached"
        assert result.describe() == "long-range dependent"

    def test_exhausted_by_min_seg(self):
        # k̂ = 15 < min_seg，唯一的分段不能再分
        x = np.zeros(100)
        x[:15] = 1.0
        result = multistage_classify(x, max_changes=2, bandwidth=BandwidthRule(multiplier=1.0), min_seg=20)
        assert result.verdict == "long_range_dependent"
        assert len(result.trace) == 1
        stage = result.trace[0]
        assert stage.decision == "reject"
        assert stage.flag == "exhausted_by_min_seg"
        assert stage.segments[0].khat_local == 15
        assert not stage.segments[0].splittable

    def test_segments_partition_and_nest(self):
        generator = np.random.default_rng(31)
        x = generator.standard_normal(1200)
        x[400:800] += 8.0
        result = multistage_classify(x, max_changes=3, alpha=0.001, bandwidth=BandwidthRule(multiplier=2.0))
        assert result.n_changes == 2
        for stage in result.trace:
            bounds = [(s.lo, s.hi) for s in stage.segments]
            assert bounds[0][0] == 0 and bounds[-1][1] == 1200
            assert all(a[1] == b[0] for a, b in zip(bounds, bounds[1:]))
            if stage.split is not None:
                assert stage.split.lo < stage.split.khat_local < stage.split.hi
                assert stage.split.khat_local in result.changepoints

    def test_rerun_is_identical(self):
        generator = np.random.default_rng(44)
        x = generator.standard_normal(900)
        x[300:] += 3.0
        first = multistage_classify(x, max_changes=2, bandwidth=BandwidthRule(multiplier=2.0))
        second = multistage_classify(x.copy(), max_changes=2, bandwidth=BandwidthRule(multiplier=2.0))
        assert first.model_dump() == second.model_dump()

    def test_series_too_short_for_segments(self, rng):
        with pytest.raises(SegmentTooShort):
            multistage_classify(rng.standard_normal(50), max_changes=2, min_seg=20)

    def test_invalid_max_changes(self, rng):
        with pytest.raises(ValueError):
            multistage_classify(rng.standard_normal(100), max_changes=0)

    @pytest.mark.slow
    def test_two_change_recovery_rate(self):
        rule = BandwidthRule(multiplier=2.0)
        recovered = 0
        for rep in range(200):
            x = make_rng(1200, rep).standard_normal(1200)
            x[400:800] += 8.0
            result = multistage_classify(x, max_changes=2, bandwidth=rule)
            if result.n_changes == 2 and all(
                abs(found - true) <= 48 for found, true in zip(result.changepoints, (400, 800))
            ):
                recovered += 1
        assert recovered >= 160


class TestSegmentationService:
    def test_classify_uses_configuration(self):
        generator = np.random.default_rng(9)
        x = generator.standard_normal(400)
        x[200:] += 6.0
        service = SegmentationService(max_changes=3, alpha=0.001, bandwidth=BandwidthRule(multiplier=2.0))
        result = service.classify(x.tolist())
        assert result.max_changes == 3
        assert result.alpha == 0.001
        assert result.verdict == "weakly_dependent"
        assert result.n_changes == 1
        assert abs(result.changepoints[0] - 200) <= 5
        assert result.describe() == "1 change-point(s)"
