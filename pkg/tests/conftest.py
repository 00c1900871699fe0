import pytest

from ucpking.core import GaussianIonCloud
from ucpking.king import solve_selfconsistent


@pytest.fixture(scope="session")
def reference_cloud():
    return GaussianIonCloud(4e5, 250e-6)


@pytest.fixture(scope="session")
def reference_solution(reference_cloud):
    # N_e = 3.8e5, eta = 10
    return solve_selfconsistent(reference_cloud, 3.8e5, 10.0)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion, then assert."""

    def record(number: int, title: str, checks: dict):
        ok = all(passed for passed, _ in checks.values())
        detail = "; ".join(f"{name}: {'ok' if passed else 'FAILED'} ({info})" for name, (passed, info) in checks.items())
        line = f"criterion {number} [{title}]: {'PASS' if ok else 'FAIL'} -- {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
