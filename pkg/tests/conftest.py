import sys

import numpy as np
import pytest

from l1fault.graph import build_graph, chain_graph, grid_graph
from l1fault.plant import build_plant, double_integrator, integrator


@pytest.fixture
def chain3():
    return chain_graph(3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def chain3_plant(chain3):
    return build_plant(chain3, integrator(1))


@pytest.fixture
def grid9_plant():
    return build_plant(grid_graph(3, 3), double_integrator())


def random_connected_graph(rng, M, extra=0.3):
    """Random spanning tree plus a few extra edges, random orientation."""
    edges = set()
    order = rng.permutation(np.arange(1, M + 1))
    for t in range(1, M):
        a, b = int(order[t]), int(order[rng.integers(0, t)])
        edges.add(frozenset((a, b)))
    for i in range(1, M + 1):
        for j in range(i + 1, M + 1):
            if rng.uniform() < extra:
                edges.add(frozenset((i, j)))
    oriented = []
    for e in sorted(tuple(sorted(e)) for e in edges):
        oriented.append(e if rng.uniform() < 0.5 else e[::-1])
    return build_graph(M, oriented)


def pytest_terminal_summary(terminalreporter):
    acc = sys.modules.get("test_acceptance")
    if acc is None or not acc.RESULTS:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(acc.RESULTS):
        terminalreporter.write_line(acc.RESULTS[num][1])
