import pytest

from twinqrng._kernels import NUMBA_KERNELS, NUMPY_KERNELS
from twinqrng.model import SqueezeParams

ACCEPTANCE_LINES: list[str] = []

BACKENDS = [NUMPY_KERNELS] + ([NUMBA_KERNELS] if NUMBA_KERNELS is not None else [])


@pytest.fixture(params=BACKENDS, ids=lambda k: k.name)
def kernels(request):
    return request.param


@pytest.fixture
def reference_params():
    return SqueezeParams(gain=11.5, eta_probe=0.78, eta_conj=0.78)


@pytest.fixture(scope="session")
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
