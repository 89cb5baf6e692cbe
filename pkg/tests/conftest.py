import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from thermoweyl.circle_bundle import BundleGrid
from thermoweyl.surface import BaseMetric, TorusChart

settings.register_profile("ci", max_examples=25, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ci")

METRICS = {
    "flat": lambda x, y: 0 * x,
    "cosx": lambda x, y: 0.1 * np.cos(x),
    "cosx_siny": lambda x, y: 0.1 * np.cos(x) + 0.07 * np.sin(y),
}


def make_grid(n=32, metric="flat", nphi=None):
    chart = TorusChart(n, n)
    return BundleGrid(BaseMetric.from_function(chart, METRICS[metric]), nphi or n)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=list(METRICS))
def grid32(request):
    return make_grid(32, request.param)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.summary_lines():
        terminalreporter.write_line(line)
