import pytest

from contestable.core import Bid
from contestable.money import to_micros


def m(x) -> int:
    return to_micros(str(x))


@pytest.fixture
def running_bid():
    return Bid("alice", m(15), m(1000), 50)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
