import numpy as np
import pytest

from fluidlb import Network, SqrtRate
from fluidlb.static_routing import solve_static


@pytest.fixture(scope="session")
def sym_net():
    """One frontend, two identical sqrt backends, unit arrival, unit latency."""
    return Network(1, 2, [(0, 0, 1.0), (0, 1, 1.0)], [1.0], [SqrtRate(1, 2), SqrtRate(1, 2)])


@pytest.fixture(scope="session")
def sym_sol(sym_net):
    return solve_static(sym_net)


@pytest.fixture(scope="session")
def sym_net_fast():
    """Same instance with short latencies (tau = 0.1)."""
    return Network(1, 2, [(0, 0, 0.1), (0, 1, 0.1)], [1.0], [SqrtRate(1, 2), SqrtRate(1, 2)])


@pytest.fixture(scope="session")
def sym_sol_fast(sym_net_fast):
    return solve_static(sym_net_fast)


@pytest.fixture(scope="session")
def fig4_init():
    return np.zeros(2), np.array([[0.1, 0.9]])
