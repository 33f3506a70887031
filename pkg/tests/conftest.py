import pytest
from hypothesis import HealthCheck, settings

from support import room

settings.register_profile(
    "default",
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")

_ACCEPTANCE_LINES = []


class AcceptanceLog:
    """Collects one PASS/FAIL line per acceptance criterion."""

    def record(self, name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  |  {detail}" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    def note(self, text):
        _ACCEPTANCE_LINES.extend("      " + t for t in text.splitlines())
        print(text)


@pytest.fixture(scope="session")
def acceptance():
    return AcceptanceLog()


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def rooms_4_to_12():
    """100 rooms, twenty of each corner count 4, 6, 8, 10 and 12."""
    counts = (4, 6, 8, 10, 12)
    return [room(1000 + i, counts[i % 5]) for i in range(100)]


@pytest.fixture(scope="session")
def cuboid():
    return room(0, 4)


@pytest.fixture(scope="session")
def l_room():
    return room(1, 6)
