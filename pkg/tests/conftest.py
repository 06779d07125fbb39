import pytest

from fscdsim.fibre_plant import ConnectorEvent, FibrePath, FibreSegment
from fscdsim.otdr import OtdrConfig

NOISELESS_CFG = OtdrConfig(num_averages=float("inf"))


@pytest.fixture
def plant() -> FibrePath:
    """12.8 km span with one connector at 1.1 km."""
    return FibrePath((FibreSegment(12800.0),), (ConnectorEvent(1100.0),))


@pytest.fixture
def noiseless() -> OtdrConfig:
    return NOISELESS_CFG


# -- acceptance summary ----------------------------------------------------------

_CRITERIA: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    failed = report.failed
    prev = _CRITERIA.get(number)
    if report.when == "call" or failed:
        status = "FAIL" if failed or (prev and prev[1] == "FAIL") else "PASS"
        _CRITERIA[number] = (title, status, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, duration = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}  ({duration:.2f} s)")
