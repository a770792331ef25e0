import sys
from pathlib import Path

import pytest

MOCK = Path(__file__).parent / "mocks" / "mock_backend.py"

_acceptance = {}


@pytest.fixture
def mock_cmd():
    def make(*args):
        return [sys.executable, str(MOCK), *map(str, args)]
    return make


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        _acceptance[report.nodeid] = (report.passed, report)
    elif "test_acceptance.py" in report.nodeid and report.when == "setup" and report.failed:
        _acceptance[report.nodeid] = (False, report)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid, (ok, _) in sorted(_acceptance.items(), key=lambda kv: kv[0]):
        name = nodeid.split("::")[-1]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")
