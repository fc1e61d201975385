"""Per-criterion verdicts for the acceptance suite.

Tests tagged ``@pytest.mark.criterion(n, "title")`` are grouped by ``n``; the
terminal summary prints one line per criterion, failing it if any of its tests
failed or errored.
"""

import pytest

_VERDICTS: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not rep.failed):
        return
    n, title = mark.args
    entry = _VERDICTS.setdefault(n, {"title": title, "passed": True, "tests": 0})
    if rep.when == "call":
        entry["tests"] += 1
    if rep.failed:
        entry["passed"] = False


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_VERDICTS):
        v = _VERDICTS[n]
        status = "PASS" if v["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d} {status}  {v['title']} "
                                    f"({v['tests']} tests)")
