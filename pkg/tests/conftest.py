import re
from collections import defaultdict

# acceptance criterion number -> outcomes of its tests
_OUTCOMES = defaultdict(list)


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_ac(\d+)_(\S+)", report.nodeid)
    if not m:
        return
    if report.when == "call" or report.outcome != "passed":
        _OUTCOMES[int(m.group(1))].append((m.group(2), report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_OUTCOMES):
        parts = _OUTCOMES[n]
        ok = all(outcome == "passed" for _, outcome in parts)
        names = ", ".join(f"{name}={outcome}" for name, outcome in parts)
        terminalreporter.write_line(f"AC{n}: {'PASS' if ok else 'FAIL'}  [{names}]")
