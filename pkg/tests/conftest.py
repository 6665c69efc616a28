from contextlib import contextmanager

import pytest


def pytest_configure(config):
    config._criterion_lines = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_criterion_lines", {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for num in sorted(lines):
            terminalreporter.write_line(lines[num])


@pytest.fixture
def criterion(request):
    """Record one pass/fail line per acceptance criterion for the run summary."""

    @contextmanager
    def _criterion(num: int, desc: str):
        store = request.config._criterion_lines
        try:
            yield
        except BaseException:
            store[num] = f"[criterion {num:2d}] FAIL - {desc}"
            raise
        store[num] = f"[criterion {num:2d}] PASS - {desc}"

    return _criterion
