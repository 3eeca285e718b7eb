import sys

import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(capsys):
    """Record (and echo straight to the terminal) one acceptance verdict line."""

    def record(label, passed, detail):
        status = {True: "PASS", False: "FAIL", None: "SKIP"}[passed]
        line = f"[{status}] {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            sys.stdout.write(f"\n{line}\n")
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
