import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from config.config_loader import ConfigLoader  # noqa: E402


@pytest.fixture(autouse=True)
def fresh_config(monkeypatch):
    """Default config.json for every test, no environment overrides"""
    monkeypatch.delenv("INDIVAR_CONFIG", raising=False)
    monkeypatch.delenv("INDIVAR_WORKERS", raising=False)
    ConfigLoader().reload()
    yield ConfigLoader()
    ConfigLoader().reload()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
