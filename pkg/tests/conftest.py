import pytest

_CRITERIA: list[str] = []


@pytest.fixture
def criterion():
    """Record a one-line verdict for an acceptance criterion, then assert it."""

    def check(number: int, passed: bool, detail: str) -> None:
        _CRITERIA.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {detail}")
        assert passed, detail

    return check


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_CRITERIA, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
