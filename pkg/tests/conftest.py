import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from cdw_lab import kernels
from cdw_lab.core import generate_impurities

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

BACKENDS = [kernels.load_backend("python")]
if kernels.compiled_available():
    BACKENDS.append(kernels.load_backend("cython"))


@pytest.fixture(params=BACKENDS, ids=lambda b: b.BACKEND)
def backend(request):
    return request.param


@pytest.fixture(scope="session")
def lattice64():
    return generate_impurities(64, 1.0, 64.0, 42)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_KEY = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_KEY] = {}


@pytest.fixture
def record_criterion(request):
    """Record one pass/fail line for an acceptance criterion."""

    def record(number, title, ok, detail):
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        request.config.stash[ACCEPTANCE_KEY][number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, {})
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
