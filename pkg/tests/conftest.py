import re

_acceptance_results: dict[str, str] = {}

_CRITERION_RE = re.compile(r"test_criterion_(\d+)_(\w+)")


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance.py" not in report.nodeid:
        return
    match = _CRITERION_RE.search(report.nodeid)
    if match:
        key = f"{int(match.group(1)):02d} {match.group(2).replace('_', ' ')}"
        _acceptance_results[key] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_acceptance_results):
        number, _, name = key.partition(" ")
        outcome = _acceptance_results[key].upper()
        marker = "PASS" if outcome == "PASSED" else outcome
        terminalreporter.write_line(f"criterion {int(number)}: {marker} - {name}")
