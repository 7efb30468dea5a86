import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from fem import FeSpace
from geometry import Mesh, RoughProfile, build_unit_square_mesh
from solver import solve_beta, solve_corrector


@pytest.fixture
def two_triangle_mesh():
    vertices = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    triangles = np.array([[0, 1, 2], [1, 3, 2]])
    edges = np.array([[0, 1], [1, 3], [3, 2], [2, 0]])
    return Mesh(vertices, triangles, edges,
                ('Bottom', 'Right', 'Top', 'Left'), name='two').validate()


@pytest.fixture
def square_p2():
    return FeSpace(build_unit_square_mesh(0.25), 2)


@pytest.fixture(scope='session')
def flat_cell():
    return solve_beta(RoughProfile.flat(), L=3.0, h=0.25)


@pytest.fixture(scope='session')
def sine_cell():
    return solve_beta(RoughProfile.sine(), L=4.0, h=0.1)


@pytest.fixture(scope='session')
def sine_correctors(sine_cell):
    profile = RoughProfile.sine()
    return {side: solve_corrector(side, sine_cell.neumann_trace_E, L=8.0,
                                  h=0.5, profile=profile, bottom_h=0.1)
            for side in ('in', 'out')}
