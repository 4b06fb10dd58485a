import pytest

from polyritz.manifolds import circle, flat_torus, sphere2

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def S1():
    return circle()


@pytest.fixture(scope="session")
def T2():
    return flat_torus(2)


@pytest.fixture(scope="session")
def S2():
    return sphere2()


@pytest.fixture
def record_criterion():
    """Register one PASS/FAIL line for the terminal summary."""
    def record(number, title, passed, detail=""):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}"
        if detail:
            line += f"  [{detail}]"
        ACCEPTANCE_LINES.append((number, line))
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
