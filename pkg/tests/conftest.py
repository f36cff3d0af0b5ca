import re
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERION = re.compile(r"test_criterion_(\d+)")
_details: dict[str, str] = {}
_outcomes: dict[str, str] = {}


@pytest.fixture
def acceptance(request):
    """Record a one-line measurement summary for the current criterion."""

    def record(detail: str):
        _details[request.node.nodeid] = detail

    return record


def pytest_runtest_logreport(report):
    if not _CRITERION.search(report.nodeid):
        return
    if report.when == "call" or report.failed or report.skipped:
        if _outcomes.get(report.nodeid) != "FAIL":
            _outcomes[report.nodeid] = "FAIL" if report.failed else ("SKIP" if report.skipped else "PASS")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(_outcomes, key=lambda n: (int(_CRITERION.search(n).group(1)), n)):
        num = int(_CRITERION.search(nodeid).group(1))
        line = f"criterion {num:2d} {_outcomes[nodeid]:4s} {nodeid.split('::')[-1]}"
        if nodeid in _details:
            line += f" | {_details[nodeid]}"
        terminalreporter.write_line(line)
