import os

import numpy as np
import pytest

from vemmhd.forms import build_discretization
from vemmhd.mesh import PolyMesh, build_cube_mesh, build_dtp_mesh, import_mesh

DATA = os.path.join(os.path.dirname(__file__), "data")
VORONOI = os.path.join(DATA, "voronoi64.txt")


def single_cell(mesh, c):
    """The cell ``c`` of ``mesh`` as a one-cell mesh."""
    loops = []
    for f, s in zip(mesh.cell_faces[c], mesh.cell_signs[c]):
        loop = list(mesh.faces[f])
        loops.append(loop if s > 0 else loop[::-1])
    used = sorted({v for l in loops for v in l})
    remap = {v: i for i, v in enumerate(used)}
    return PolyMesh.from_cell_loops(mesh.vertices[used], [[[remap[v] for v in l] for l in loops]])


@pytest.fixture(scope="session")
def cube1():
    return build_cube_mesh(1)


@pytest.fixture(scope="session")
def cube2():
    return build_cube_mesh(2)


@pytest.fixture(scope="session")
def prism():
    """One triangular prism cut from the distorted family."""
    return single_cell(build_dtp_mesh(1), 0)


@pytest.fixture(scope="session")
def voronoi():
    return import_mesh(VORONOI)


@pytest.fixture(scope="session")
def voronoi_cell(voronoi):
    # the cell with the most faces exercises the general polygon paths
    c = max(range(voronoi.n_cells), key=lambda i: len(voronoi.cell_faces[i]))
    return single_cell(voronoi, c)


@pytest.fixture(scope="session")
def disc_cube1():
    return build_discretization(build_cube_mesh(1), kJ=1)


@pytest.fixture(scope="session")
def disc_cube2():
    return build_discretization(build_cube_mesh(2), kJ=1)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
