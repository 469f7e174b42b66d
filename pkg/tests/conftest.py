import numpy as np
import pytest

from privgame.game import LQGame
from privgame.network import ring_lattice


@pytest.fixture(scope="session")
def benchmark_game() -> LQGame:
    """10-player ring, 4 neighbors each, weight 0.08, b = 10, box [0, 100]."""
    net = ring_lattice(10, 4, 0.08)
    return LQGame(net=net, b=np.full(10, 10.0), action_box=(0.0, 100.0))
