"""测试公共夹具"""
from pathlib import Path

import numpy as np
import pytest

from config import Settings
from services.analysis_service import AnalysisService, format_values


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240601)


@pytest.fixture
def settings(tmp_path: Path) -> Settings:
    return Settings(report_dir=None, log_level="WARNING")


@pytest.fixture
def analysis_service(settings: Settings) -> AnalysisService:
    return AnalysisService(settings)


@pytest.fixture
def write_series(tmp_path: Path):
    """把序列写成每行一个值的文件"""
    def _write(values, name: str = "series.txt") -> Path:
        path = tmp_path / name
        path.write_text(format_values(values), encoding="utf-8")
        return path
    return _write


@pytest.fixture
def two_mean_series(rng: np.random.Generator) -> np.ndarray:
    """n=400，前 200 个均值 0，后 200 个均值 10"""
    x = rng.standard_normal(400)
    x[200:] += 10.0
    return x
