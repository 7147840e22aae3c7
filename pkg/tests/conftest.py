import sys

import pytest

from crnroute.config import ScenarioConfig


@pytest.fixture
def coexistence_cfg():
    """One always-ON PU covering both relays between a source and its destination."""
    return ScenarioConfig(
        num_sus=4, num_pus=1, num_flows=1,
        su_positions=[(0.0, 0.0), (100.0, 10.0), (100.0, -10.0), (200.0, 0.0)],
        pu_positions=[(150.0, 0.0)],
        flows=[(0, 3)],
        pu_activity=1.0, rate_per_source=50e3, horizon=30.0,
    )


@pytest.fixture
def trivial_cfg():
    return ScenarioConfig(
        num_sus=2, num_pus=0, num_flows=1,
        su_positions=[(0.0, 0.0), (60.0, 0.0)], pu_positions=[], flows=[(0, 1)],
        rate_per_source=20e3, horizon=30.0,
    )


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
