import pytest

from truncvex import GridSpec, cassini_field

# (criterion number, line) pairs filled in by test_acceptance.py
ACCEPTANCE_LINES: list[tuple[int, str]] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def f1():
    return cassini_field(1.0)


@pytest.fixture(scope="session")
def grid3():
    """[-3, 3]^2 at 300 x 300: coarse enough for fast unit tests."""
    return GridSpec.square(3.0, 300)
