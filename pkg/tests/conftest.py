import numpy as np
import pytest
from hypothesis import settings

import equiloc as eq

settings.register_profile("repro", derandomize=True, deadline=None)
settings.load_profile("repro")

_ACCEPTANCE = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    ok = call.excinfo is None
    prev = _ACCEPTANCE.get(number, (title, True))
    _ACCEPTANCE[number] = (title, prev[1] and ok)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}")


@pytest.fixture(scope="session")
def lehigh():
    return eq.load_lehigh()


@pytest.fixture
def tri():
    d = [[0, 10, 20], [10, 0, 5], [20, 5, 0]]
    return eq.from_arrays(d, demand_mean=[1.0, 2.0, 3.0], p=1)


def random_integer_instance(rng, n, p, max_d=30, max_w=9):
    d = rng.integers(1, max_d + 1, (n, n)).astype(float)
    np.fill_diagonal(d, 0.0)
    w = rng.integers(1, max_w + 1, n).astype(float)
    return eq.from_arrays(d, w, p=p)


def random_integer_scenarios(rng, n, n_scen, max_d=30, max_w=9):
    D = rng.integers(1, max_d + 1, (n_scen, n, n)).astype(float)
    for k in range(n_scen):
        np.fill_diagonal(D[k], 0.0)
    W = rng.integers(1, max_w + 1, (n_scen, n)).astype(float)
    return eq.ScenarioSet(W, D)
