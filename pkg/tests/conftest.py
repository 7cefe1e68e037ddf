import sys
from pathlib import Path

import numpy as np
import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from higen.graph import LevelGraph  # noqa: E402

torch.set_num_threads(max(1, min(4, torch.get_num_threads())))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_graph(rng, n, p):
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < p
    return LevelGraph(n, {(int(a), int(b)): 1 for a, b in zip(iu[keep], ju[keep])}, 0)


def random_partition_stack(n, depth, rng):
    """Random nested assignments whose last step merges everything."""
    stack, size = [], n
    for level in range(depth):
        if level == depth - 1:
            a = np.zeros(size, dtype=np.int64)
        else:
            k = int(rng.integers(1, size + 1))
            a = rng.integers(0, k, size=size)
            a = np.unique(a, return_inverse=True)[1]
        stack.append(a)
        size = int(a.max()) + 1
    return stack
