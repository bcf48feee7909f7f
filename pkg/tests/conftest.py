import numpy as np
import pytest

from blocktopo import build_block_index, make_mesh


def single_tet():
    return make_mesh(np.eye(4, 3), [[0, 1, 2, 3]], [0, 0, 0, 0])


def two_tets():
    """Two tetrahedra glued along triangle (v0, v1, v2), apexes v3 and v4;
    v0, v1 in block 0 and the rest in block 1."""
    coords = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, -1]]
    return make_mesh(coords, [[0, 1, 2, 3], [0, 1, 2, 4]], [0, 0, 1, 1, 1])


@pytest.fixture
def tet():
    m = single_tet()
    return m, build_block_index(m)


@pytest.fixture
def glued():
    m = two_tets()
    return m, build_block_index(m)
