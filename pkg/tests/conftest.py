import time

import pytest

from delay_adp import experiments as ex
from delay_adp.config import benchmark_cav, benchmark_metal_cutting


class Timed:
    """A fixture value together with the wall time it took to build."""

    def __init__(self, fn):
        t = time.perf_counter()
        self.value = fn()
        self.seconds = time.perf_counter() - t


@pytest.fixture(scope="session")
def metal_cfg():
    return benchmark_metal_cutting()


@pytest.fixture(scope="session")
def cav_cfg():
    return benchmark_cav()


@pytest.fixture(scope="session")
def metal_pi(metal_cfg):
    return Timed(lambda: ex.model_pi(metal_cfg))


@pytest.fixture(scope="session")
def cav_pi(cav_cfg):
    return Timed(lambda: ex.model_pi(cav_cfg))


_ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def report(request):
    """report(number, passed, detail, seconds) records one acceptance line."""
    lines = request.config.stash.setdefault(_ACCEPTANCE, [])

    def add(number, passed, detail, seconds):
        lines.append((number, "PASS" if passed else "FAIL", detail, seconds))
    return add


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE, [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, status, detail, seconds in sorted(lines):
        terminalreporter.write_line(f"criterion {number}: {status}  {detail}  ({seconds:.1f} s)")
