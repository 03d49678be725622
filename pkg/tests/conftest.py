"""Shared test plumbing.

The acceptance tests register one verdict line per criterion here so the
full list is printed at the end of the run even when stdout capture is
on.
"""

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
