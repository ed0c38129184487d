"""Shared fixtures; collects one summary line per acceptance criterion."""

import pytest

CRITERION_LINES = []


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def record_criterion():
    """Print and keep a single pass/fail line for a criterion."""

    def _record(number, title, checks, runtime=None, limit=None):
        ok = all(c.passed for c in checks)
        timing = ""
        if runtime is not None:
            timing = f"  runtime={runtime:.1f}s"
            if limit is not None:
                ok = ok and runtime < limit
                timing += f" (limit {limit:g}s)"
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title}{timing}"
        CRITERION_LINES.append(line)
        print(line)
        for c in checks:
            print("    " + c.line())
        return ok

    return _record
