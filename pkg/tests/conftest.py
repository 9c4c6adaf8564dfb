import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from hypfts import catalog  # noqa: E402
from hypfts.system import SystemSpec  # noqa: E402


@pytest.fixture
def unit_zero():
    """Unit speeds with an absorbing boundary."""
    return catalog.absorbing()


@pytest.fixture
def sine_pair():
    """Unit-speed pair with r = 1 + 0.5 sin t and s = 0.8 cos 2t."""
    return catalog.nonlinear_pair("baseline").spec


@pytest.fixture
def variable_spec():
    """Smooth variable speeds, damping and a nonlinear boundary."""
    return SystemSpec.from_strings(
        ["1.5 + 0.3*sin(3*x + t)", "-(1.2 + 0.2*cos(2*x))"],
        ["0.3*x", "0.1*t"],
        m=1,
        h=["0.5*sin(xi2)", "0.4*xi1 + 0.1*xi1^2"],
        speed_floor=1.0,
    )


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "RESULTS", None)
    lines = [v for k, v in sorted((k, v) for k, v in (results or {}).items() if isinstance(k, int))]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
