"""Test configuration: acceptance-criterion reporting.

Acceptance tests register a one-line verdict per criterion through the
``record_criterion`` fixture; the verdicts are printed in a dedicated section
after the run so the acceptance status is readable at a glance even when a
criterion is red.
"""

import pytest

_CRITERIA = {}


def _record(number: int, status: str, detail: str = ""):
    _CRITERIA[int(number)] = (status, detail)


@pytest.fixture
def record_criterion():
    """Callable (number, status, detail) -> None; status is PASS/FAIL/SKIP."""
    return _record


@pytest.hookimpl(trylast=True)
def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, detail = _CRITERIA[number]
        line = f"CRITERION {number}: {status}"
        if detail:
            line += f" — {detail}"
        terminalreporter.write_line(line)
