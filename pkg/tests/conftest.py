import os
import sys

import numpy as np
import pytest

# Add src to Python path for imports
sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'src'))

from model import ModelSpec, equicorrelation  # noqa: E402


@pytest.fixture
def one_asset_model():
    """s=100, K=100, sigma=0.2, r=0.05, T=1, weight 1"""
    return ModelSpec(spots=[100.0], vols=[0.2], rate=0.05, maturity=1.0, correlation=[[1.0]],
                     strike=100.0, weights=[1.0])


@pytest.fixture
def two_asset_model():
    return ModelSpec(spots=[50.0, 50.0], vols=[0.2, 0.2], rate=0.05, maturity=1.0,
                     correlation=equicorrelation(2, 0.1), strike=45.0, barriers=[60.0, 60.0])


@pytest.fixture
def report_dir(tmp_path, monkeypatch):
    monkeypatch.setenv('CUBATURE_REPORT_DIR', str(tmp_path / 'reports'))
    return tmp_path / 'reports'


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
