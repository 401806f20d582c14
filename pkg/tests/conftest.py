import sys

import pytest

from solitonq import _accel
from solitonq.sampler import McmcConfig


@pytest.fixture(params=["numba", "numpy"])
def each_backend(request):
    if request.param == "numba" and not _accel.HAVE_NUMBA:
        pytest.skip("numba not installed")
    with _accel.forced_backend(request.param):
        yield request.param


@pytest.fixture
def small_mcmc():
    return McmcConfig(chains=4, samples_per_chain=40_000, burn_in=4_000, seed=11)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
