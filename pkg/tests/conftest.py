import numpy as np
import pytest

from flowlab import datums
from flowlab.fields import TorusGrid


@pytest.fixture(scope="session")
def grid2():
    return TorusGrid(2, 32)


@pytest.fixture(scope="session")
def tg_run():
    """Picard Taylor-Green run on the acceptance grid (N = 64, T = 1)."""
    from flowlab import mild
    g = TorusGrid(2, 64)
    return mild.picard_solve(datums.taylor_green(g), 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[n].line())
    passed = sum(r.passed for r in RESULTS.values())
    terminalreporter.write_line(f"{passed}/{len(RESULTS)} criteria passed")
