import numpy as np
import pytest

from bvselect.synthetic import binomial_pair, linear_planted


@pytest.fixture(scope="session")
def planted():
    return linear_planted(0)


@pytest.fixture(scope="session")
def pair():
    return binomial_pair(0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def compiled_available():
    try:
        from bvselect import _kernels  # noqa: F401
    except ImportError:
        return False
    return True


needs_compiled = pytest.mark.skipif(not compiled_available(), reason="compiled kernels not built")


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
