import os
from pathlib import Path

import numpy as np
import pytest

os.environ.setdefault("CYLSTABLE_CACHE", str(Path(__file__).resolve().parent.parent / ".cylstable_cache"))

from cylstable.cache import cached_kernel_table
from cylstable.stable1d import TruncationParams, default_table_grid

ALPHA = 0.5
D = 2


@pytest.fixture(scope="session")
def trunc():
    # eps = 1 maximises the admissible truncation radius, which best conditions
    # the spatial grids; tau = 2 covers every probe horizon used in the suite
    return TruncationParams.for_model(ALPHA, D, eps=1.0, tau=2.0, eta1=1.0)


@pytest.fixture(scope="session")
def kernel_table(trunc):
    t_nodes, x_nodes = default_table_grid(trunc)
    return cached_kernel_table(trunc, t_nodes, x_nodes)


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20260810)
