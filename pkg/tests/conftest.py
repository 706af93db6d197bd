from __future__ import annotations

import numpy as np
import pytest

from channelfsi.extension import InflowProfile
from channelfsi.geometry import Channel, Ellipse, Geometry, Placement, SmoothedPolygon
from channelfsi.mesh import MeshOptions
from channelfsi.ns_solver import FlowProblem, solve_navier_stokes

# irregular (non-symmetric) deck cross-section
HEXAGON = [(-0.45, 0.0), (-0.25, -0.12), (0.3, -0.14), (0.45, 0.02), (0.2, 0.13), (-0.3, 0.1)]


@pytest.fixture(scope="session")
def geom():
    return Geometry(Channel(1.0, 2.5), Ellipse(0.4, 0.2))


@pytest.fixture(scope="session")
def hexagon():
    return SmoothedPolygon(HEXAGON, 0.03)


@pytest.fixture(scope="session")
def couette():
    return InflowProfile.couette(1.0, 1)


@pytest.fixture(scope="session")
def asym_problem(geom, couette):
    return FlowProblem(1.0, 0.05, couette, geom, Placement(0.0, 0.3))


@pytest.fixture(scope="session")
def asym_mesh(geom):
    return MeshOptions().build(geom, Placement(0.0, 0.3))


@pytest.fixture(scope="session")
def asym_field(asym_problem, asym_mesh):
    return solve_navier_stokes(asym_problem, asym_mesh)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
