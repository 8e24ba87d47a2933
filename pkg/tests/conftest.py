"""Shared pytest hooks: one PASS/FAIL line per acceptance criterion."""
import pytest

_criteria: dict[int, tuple[str, str, str]] = {}
DETAILS: dict[int, str] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = "PASS" if report.passed else "FAIL"
        _criteria[number] = (status, title, DETAILS.get(number, ""))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        status, title, detail = _criteria[number]
        line = f"criterion {number:2d} {status}: {title}"
        if detail:
            line += f" ({detail})"
        terminalreporter.write_line(line)
