import numpy as np
import pytest

from coolshape.generator import GeneratorParams, generate_manifold, rectangle_mesh
from coolshape.mesh import FacetMarker, Mesh, RegionMarker
from coolshape.physics import DarcyParams, PhysicalParams, solve_state

SMALL = GeneratorParams(n_channels=3, channel_length=1e-3, target_cell_size=1e-4)


def single_triangle(vertices=((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)), height=1.0):
    return Mesh(
        vertices=np.array(vertices, float),
        triangles=[[0, 1, 2]],
        facets=[[0, 1], [1, 2], [2, 0]],
        facet_markers=[FacetMarker.WALL, FacetMarker.OUTLET, FacetMarker.INLET],
        cell_markers=[RegionMarker.FLUID],
        height=height,
    )


def two_triangles():
    return Mesh(
        vertices=[[0, 0], [1, 0], [1, 1], [0, 1]],
        triangles=[[0, 1, 2], [0, 2, 3]],
        facets=[[0, 1], [1, 2], [2, 3], [3, 0]],
        facet_markers=[FacetMarker.WALL, FacetMarker.OUTLET, FacetMarker.WALL, FacetMarker.INLET],
        cell_markers=[RegionMarker.FLUID, RegionMarker.FLUID],
        height=1.0,
    )


@pytest.fixture
def unit_square():
    return rectangle_mesh(4, 4)


@pytest.fixture(scope="session")
def params():
    return PhysicalParams()


@pytest.fixture(scope="session")
def small_full():
    return generate_manifold(SMALL)


@pytest.fixture(scope="session")
def small_darcy():
    return generate_manifold(SMALL, darcy=True)


@pytest.fixture(scope="session")
def small_full_state(small_full, params):
    return solve_state(small_full, params)


@pytest.fixture(scope="session")
def small_darcy_state(small_darcy, params):
    return solve_state(small_darcy, params, DarcyParams())


@pytest.fixture(scope="session")
def manifold():
    return generate_manifold()


@pytest.fixture(scope="session")
def darcy_manifold():
    return generate_manifold(darcy=True)
