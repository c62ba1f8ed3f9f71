import pytest

_ACCEPTANCE_RESULTS = []


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    if "test_acceptance" in report.nodeid:
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE_RESULTS.append((name, report.outcome, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, outcome, duration in _ACCEPTANCE_RESULTS:
        status = "PASS" if outcome == "passed" else outcome.upper()
        terminalreporter.write_line(f"{status:6s} {name} ({duration:.1f}s)")
