"""Collects the one-line acceptance verdicts and prints them in the terminal summary."""
import re

ACCEPTANCE_LINES: dict[str, str] = {}


def _order(criterion: str):
    num, suffix = re.fullmatch(r"(\d+)([a-z]?)", criterion).groups()
    return int(num), suffix


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for criterion in sorted(ACCEPTANCE_LINES, key=_order):
            terminalreporter.write_line(ACCEPTANCE_LINES[criterion])
