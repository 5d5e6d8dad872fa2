"""
Shared test configuration and fixtures for roomstate tests.

Provides small meshes and scenes that assemble in well under a second, plus
a temporary example scene directory for CLI and end-to-end tests.
"""

import shutil

import pytest

from roomstate.geometry import Medium, Scene, make_plate, make_shoebox
from roomstate.utils import create_example_scene

# Wall impedance giving reflection coefficient (Z - rho c)/(Z + rho c) of 0.6
ABSORBING_IMPEDANCE = 4.0 * 1.21 * 343.0


@pytest.fixture
def medium():
    return Medium()


@pytest.fixture
def unit_cube():
    """Rigid 1 m cube, 48 elements"""
    return make_shoebox((1.0, 1.0, 1.0), 0.5)


@pytest.fixture
def absorbing_cube():
    """1 m cube with uniformly absorbing walls, 48 elements"""
    return make_shoebox((1.0, 1.0, 1.0), 0.5, ABSORBING_IMPEDANCE)


@pytest.fixture
def shoebox():
    """Rigid 2 x 1.5 x 1 m room, 104 elements"""
    return make_shoebox((2.0, 1.5, 1.0), 0.5)


@pytest.fixture
def cube_scene(unit_cube, medium):
    return Scene(unit_cube, medium, [0.3, 0.4, 0.45], [[0.7, 0.6, 0.55]])


@pytest.fixture
def absorbing_scene(absorbing_cube, medium):
    return Scene(absorbing_cube, medium, [0.3, 0.4, 0.45], [[0.7, 0.6, 0.55]])


@pytest.fixture
def plate_scene(medium):
    """Rigid 2 x 2 m plate in z = 0 with source and receiver above it"""
    plate = make_plate(2.0, 2.0, 0.25)
    return Scene(plate, medium, [-0.3, 0.0, 0.5], [[0.3, 0.0, 0.5]])


@pytest.fixture
def absorbing_plate_scene(medium):
    """Open 0.5 m plate with Z = rho c, 32 elements; rho(A) stays well below 1 at low frequencies"""
    plate = make_plate(0.5, 0.5, 0.125, medium.characteristic_impedance)
    return Scene(plate, medium, [0.05, -0.1, 0.3], [[-0.1, 0.1, 0.4]])


@pytest.fixture
def example_scene_dir():
    """Temporary directory from create_example_scene, removed afterwards"""
    path = create_example_scene()
    yield path
    shutil.rmtree(path, ignore_errors=True)
