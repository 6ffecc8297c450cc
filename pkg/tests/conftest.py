import numpy as np
import pytest

from phturnpike import linalg
from phturnpike.phsys import builtin_ph1, builtin_ph2

try:
    from phturnpike.linalg import _jacobi  # noqa: F401

    KERNELS = ["cython", "python"]
except ImportError:
    KERNELS = ["python"]


@pytest.fixture(params=KERNELS)
def kernel(request):
    """Run the test once per available rotation kernel."""
    previous = linalg.BACKEND
    linalg.use_kernel(request.param)
    yield request.param
    linalg.use_kernel(previous)


@pytest.fixture(scope="session")
def ph1():
    return builtin_ph1()


@pytest.fixture(scope="session")
def ph2():
    return builtin_ph2()


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one PASS/FAIL line per acceptance criterion, then assert it."""

    def record(number, checks, detail=""):
        failed = [name for name, ok in checks.items() if not ok]
        line = f"criterion {number:2d}: {'PASS' if not failed else 'FAIL'}  {detail}"
        if failed:
            line += f"  [failed: {', '.join(failed)}]"
        _CRITERIA[number] = line
        print(line)
        assert not failed, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])
