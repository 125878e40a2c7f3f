"""Acceptance bookkeeping: one PASS/FAIL/SKIP line per criterion at the end of the run."""

import pytest

_results: dict[int, list[str]] = {}


def pytest_runtest_logreport(report):
    n = getattr(report, "criterion", None)
    if n is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _results.setdefault(n, []).append("SKIP" if report.skipped else "FAIL" if report.failed else "PASS")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        outcome.get_result().criterion = mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        states = _results[n]
        verdict = "FAIL" if "FAIL" in states else "SKIP" if all(s == "SKIP" for s in states) else "PASS"
        terminalreporter.write_line(f"CRITERION {n}: {verdict}")
