import pytest

from limcom import ValuationContext, derive_constants, solve_boundary
from limcom.verify import BASELINE


@pytest.fixture(scope="session")
def params():
    return BASELINE


@pytest.fixture(scope="session")
def consts(params):
    return derive_constants(params)


@pytest.fixture(scope="session")
def grid(consts):
    return solve_boundary(consts, 256)


@pytest.fixture(scope="session")
def ctx(grid):
    return ValuationContext.from_grid(grid)


@pytest.fixture(scope="session")
def ctx_long(params):
    c = derive_constants(params.replace(T=200.0))
    return ValuationContext.from_grid(solve_boundary(c, 2048))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
