import math
import warnings

import numpy as np
import pytest

from oais.model import gaussian_target, make_proposal
from oais.oracle import QuadratureSpec

SQRT_2PI = math.sqrt(2.0 * math.pi)


def closed_form_rho(mu, var):
    """rho for pi = N(0, 1) against q = N(mu, var); infinite when var <= 1/2."""
    if var <= 0.5:
        return math.inf
    return var / math.sqrt(2.0 * var - 1.0) * math.exp(mu * mu / (2.0 * var - 1.0))


def fd_jacobian(f, x, h=1e-6):
    x = np.asarray(x, dtype=np.float64)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h * (1.0 + abs(x[i]))
        cols.append((np.asarray(f(x + e)) - np.asarray(f(x - e))) / (2.0 * e[i]))
    return np.stack(cols, axis=-1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def std_target():
    return gaussian_target([0.0])


@pytest.fixture
def quad1d():
    return QuadratureSpec.symmetric(20.0, 1, 2001)


@pytest.fixture
def meanchol1():
    return make_proposal("gaussian-meanchol", 1)


@pytest.fixture(autouse=True)
def _quiet_quadrature():
    from oais.errors import QuadratureWarning
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", QuadratureWarning)
        yield


# ---------------------------------------------------------- acceptance report

ACCEPTANCE_LINES = {}


def record_verdict(number, title, ok, detail):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line, flush=True)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[number])
