import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_CRITERIA: list[tuple[int, str, str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): one numbered exit criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when != "call":
        return
    number, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    _CRITERIA.append((number, title, "PASS" if report.passed else "FAIL", detail))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("exit criteria")
    for number, title, status, detail in sorted(_CRITERIA):
        line = f"CRITERION {number} {status}: {title}"
        if detail:
            line += f" | {detail}"
        terminalreporter.write_line(line)
