import pytest

# (criterion, passed, detail) rows filled in by test_acceptance.py
ACCEPTANCE = []


def record(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE.append((criterion, bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"{name} {'PASS' if ok else 'FAIL'}  {detail}")
