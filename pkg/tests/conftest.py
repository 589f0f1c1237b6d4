"""Shared test plumbing: the acceptance-criteria report block.

Acceptance tests record one line per criterion through record_criterion;
the terminal-summary hook prints the collected lines at the end of every
pytest run so the verdicts are visible even when everything passes.
"""

from __future__ import annotations

_CRITERION_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    verdict = "PASS" if passed else "FAIL"
    _CRITERION_LINES[number] = f"criterion {number}: {verdict} - {detail}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERION_LINES):
        terminalreporter.write_line(_CRITERION_LINES[number])
