"""Acceptance bookkeeping: tests marked ``acceptance(n, title)`` roll up into one
PASS/FAIL/SKIP line per criterion in the terminal summary."""

from __future__ import annotations

import pytest

_results: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): rolls up into the acceptance summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    entry = _results.setdefault(number, {"title": title, "passed": 0, "failed": 0, "skipped": 0})
    if report.when == "call" or (report.when == "setup" and not report.passed):
        if report.skipped:
            entry["skipped"] += 1
        elif report.failed:
            entry["failed"] += 1
        else:
            entry["passed"] += 1


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        e = _results[number]
        if e["failed"]:
            status = "FAIL"
        elif e["passed"]:
            status = "PASS"
        else:
            status = "SKIP"
        terminalreporter.write_line(f"AC{number} {status}  {e['title']}")
