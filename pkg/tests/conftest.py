import pytest

ACCEPTANCE_LINES = {}


@pytest.fixture
def criterion():
    """Record and print a one-line verdict for an acceptance criterion."""

    def record(number, passed, detail):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[number] = line
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
