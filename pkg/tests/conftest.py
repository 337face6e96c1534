"""Shared fixtures: the acceptance reporter.

Acceptance tests record one PASS/FAIL line per criterion; the lines are
replayed in a dedicated section of the terminal summary so the verdicts
survive output capture.
"""

import pytest


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def acceptance(request):
    """Report a criterion verdict, then enforce it."""

    def report(criterion: str, ok: bool, detail: str = ""):
        line = f"ACCEPTANCE {criterion} {'PASS' if ok else 'FAIL'}"
        if detail:
            line += f" ({detail})"
        request.config._acceptance_lines.append(line)
        print(line)
        assert ok, line

    return report
