import pytest

from vaxmfg.config import apply_overrides, preset
from vaxmfg.solver import fixed_point_solve

# one line per acceptance criterion, filled by test_acceptance.py
ACCEPTANCE: dict[str, str] = {}


@pytest.fixture(scope="session")
def table1():
    return fixed_point_solve(preset("table1"))


@pytest.fixture(scope="session")
def table1_tight():
    return fixed_point_solve(apply_overrides(preset("table1"), {"epsilon": 1e-8}))


@pytest.fixture(scope="session")
def table2():
    return fixed_point_solve(preset("table2"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE, key=lambda k: (int(k.split(".")[0]), k)):
            terminalreporter.write_line(ACCEPTANCE[key])
