from pathlib import Path

import numpy as np
import pytest

from entroflow.config import build_model, initial_theta, load_config
from entroflow.evaluation import soft_optimal

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


class Fixture:
    def __init__(self, name):
        self.name = name
        self.path = FIXTURES / f"{name}.cfg"
        self.cfg = load_config(self.path)
        self.model = build_model(self.cfg)
        self.opt = soft_optimal(self.model)

    def theta0(self):
        return initial_theta(self.cfg, self.model.p, self.opt)


_cache = {}


def get_fixture(name):
    if name not in _cache:
        _cache[name] = Fixture(name)
    return _cache[name]


@pytest.fixture(scope="session")
def trig():
    return get_fixture("trig_linear")


@pytest.fixture(scope="session")
def bern():
    return get_fixture("bernstein_linear")


@pytest.fixture(scope="session")
def hat():
    return get_fixture("hat_bandit")


@pytest.fixture(scope="session", params=["trig_linear", "bernstein_linear", "hat_bandit"])
def any_fixture(request):
    return get_fixture(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.report_lines():
        terminalreporter.write_line(line)
