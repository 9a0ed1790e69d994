import numpy as np
import pytest

from gaitlab.biomech import BodyParams

_ACCEPTANCE_RESULTS = {}


@pytest.fixture
def body():
    return BodyParams()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    marker_name = None
    for prop, value in report.user_properties:
        if prop == "acceptance":
            marker_name = value
    if marker_name:
        _ACCEPTANCE_RESULTS[marker_name] = report.outcome


@pytest.fixture
def acceptance(request):
    """Tag a test as one acceptance criterion for the summary printout."""
    def _tag(name):
        request.node.user_properties.append(("acceptance", name))
    return _tag


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in _ACCEPTANCE_RESULTS.items():
        status = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"  {status}  {name}")
