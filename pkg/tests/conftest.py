import numpy as np
import pytest

from diropt.graph import build_mixing_matrix, five_node_network, random_network
from diropt.problems import make_l1_least_squares

# Five-node example matrix, transcribed entry by entry.
FIVE_NODE_A = np.array([
    [1 / 4, 1 / 4, 0, 1 / 2, 0],
    [1 / 4, 1 / 4, 0, 0, 1 / 3],
    [1 / 4, 0, 1 / 2, 0, 1 / 3],
    [0, 1 / 4, 0, 1 / 2, 0],
    [1 / 4, 1 / 4, 1 / 2, 0, 1 / 3],
])

# Frozen from a dense eigensolver on FIVE_NODE_A (eigenvalue-1 eigenvector, sum 1).
FIVE_NODE_PHI = np.array([8, 12, 18, 6, 21]) / 65.0


@pytest.fixture
def five_node_mix():
    return build_mixing_matrix(five_node_network())


@pytest.fixture
def desk_l1():
    """Five agents, p = 8, with a certified ISTA reference."""
    return make_l1_least_squares(5, 8, 10, 0.5, seed=0)


@pytest.fixture
def desk_mix():
    net, _ = random_network(5, 0.5, seed=0)
    return build_mixing_matrix(net)


def two_node_mix():
    from diropt.graph import DirectedNetwork

    return build_mixing_matrix(DirectedNetwork(2, frozenset({(0, 1), (1, 0)})))


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(results):
        ok, detail = results[num]
        terminalreporter.write_line(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
