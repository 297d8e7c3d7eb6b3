import numpy as np
import pytest

from safeagc.config import load_config
from safeagc.plant import discretize


@pytest.fixture(scope="session")
def cfg():
    return load_config("default")


@pytest.fixture(scope="session")
def model(cfg):
    return cfg.model


@pytest.fixture(scope="session")
def dm_half(model):
    return discretize(model, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
