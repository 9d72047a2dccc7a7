import os

import pytest
from hypothesis import HealthCheck, settings

from rydblock.atomdata import default_constants, default_table
from rydblock.blockade import BlockadeCalculator
from rydblock.pairint import PairInteraction

settings.register_profile(
    "repo", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "repo"))


@pytest.fixture(scope="session")
def table():
    return default_table()


@pytest.fixture(scope="session")
def consts():
    return default_constants()


@pytest.fixture(scope="session")
def model():
    return PairInteraction()


@pytest.fixture(scope="session")
def calc(model):
    return BlockadeCalculator(model)


@pytest.fixture(autouse=True)
def _isolated_cache_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("RYDBLOCK_CACHE_DIR", str(tmp_path / "cache"))
