import numpy as np
import pytest

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    number, title = None, None
    for name, value in report.user_properties:
        if name == "acceptance":
            number, title = value
    if number is None:
        return
    ok = report.outcome == "passed"
    prev = _ACCEPTANCE.get(number)
    _ACCEPTANCE[number] = (title, ok and (prev is None or prev[1]))


@pytest.fixture(autouse=True)
def _record_acceptance(request):
    marker = request.node.get_closest_marker("acceptance")
    if marker is not None:
        request.node.user_properties.append(("acceptance", tuple(marker.args)))
    yield


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
