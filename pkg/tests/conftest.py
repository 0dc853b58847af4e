"""Shared pytest hooks for the suite.

Collects the acceptance verdict lines recorded by tests/test_acceptance.py
and prints them in the terminal summary, where output capture cannot
swallow them.
"""

VERDICTS = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if VERDICTS:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
