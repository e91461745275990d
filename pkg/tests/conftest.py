import sys
from pathlib import Path

import numpy as np
import pytest

from smoothprox.model import BoxSet, make_quadratic_problem

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def scalar_problem():
    """f(x) = x^2 subject to x = 0.5, x in [0, 1]; KKT pair (0.5, -1)."""
    return make_quadratic_problem([[2.0]], [0.0], [[1.0]], [0.5], BoxSet([0.0], [1.0]))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """``acceptance(number, ok, detail)`` records one criterion's outcome for
    the end-of-session summary."""
    store = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(number, ok, detail):
        store[number] = (bool(ok), detail)

    return record


def pytest_terminal_summary(terminalreporter, config):
    store = config.stash.get(_ACCEPTANCE, {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(store):
        ok, detail = store[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
