"""Shared desk-sized grids and potentials."""

import pytest

from waveop.fields import Grid3, Potential, sphere_rule
from waveop.kernelalg import EtaGrid
from waveop.structure import RGrid, StructureGrids


@pytest.fixture
def tiny_grid():
    return Grid3(4, 2.0)


@pytest.fixture
def small_grid():
    return Grid3(8, 4.0)


@pytest.fixture
def weak_potential():
    return Potential.gaussian(0.1, 1.0)


@pytest.fixture
def tiny_eta(tiny_grid):
    return EtaGrid.for_grid(tiny_grid, 3)


@pytest.fixture
def sphere6():
    return sphere_rule(6)


@pytest.fixture
def small_structure_grids():
    return StructureGrids(
        kernel=Grid3(4, 2.0),
        eta_nodes=3,
        y=Grid3(8, 4.0),
        r=RGrid(64, 8.0),
        x_omega_nodes=8,
        x_box=4.0,
    )
