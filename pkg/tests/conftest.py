import pytest

from krsolve.geometry import build_grid, fs_potential


@pytest.fixture(scope="session")
def grid512():
    return build_grid(512, 12.0)


@pytest.fixture(scope="session")
def grid1024():
    return build_grid(1024, 12.0)


@pytest.fixture(scope="session")
def fs512(grid512):
    return fs_potential(grid512)


@pytest.fixture(scope="session")
def fs1024(grid1024):
    return fs_potential(grid1024)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[k].line())
    n_pass = sum(r.passed for r in RESULTS.values())
    terminalreporter.write_line(f"{n_pass}/{len(RESULTS)} criteria passed")
