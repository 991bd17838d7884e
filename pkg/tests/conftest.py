import numpy as np
import pytest

from agentfield.config import RunConfig


@pytest.fixture(scope="session")
def cfg():
    c = RunConfig()
    c.validate()
    return c


@pytest.fixture(scope="session")
def bank(cfg):
    return cfg.bank()


@pytest.fixture(scope="session")
def ctx(cfg):
    return cfg.context()


@pytest.fixture()
def rng():
    return np.random.default_rng(20250817)
