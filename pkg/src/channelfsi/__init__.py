"""Steady Navier-Stokes flow in a channel past a rigid body: lift forces and equilibrium offsets."""

from __future__ import annotations

from .extension import InflowProfile, lift_field_w, solenoidal_s
from .fsi import RestoringForce, continuation, find_equilibrium, global_force
from .geometry import Channel, Ellipse, Geometry, Placement, SmoothedPolygon
from .lift import compute_lift, lift_boundary, lift_volume
from .mesh import MeshOptions, triangulate
from .ns_solver import FlowProblem, SolverOptions, solve_navier_stokes, solve_stokes

__version__ = "0.1.0"

__all__ = [
    "Channel",
    "Ellipse",
    "SmoothedPolygon",
    "Geometry",
    "Placement",
    "InflowProfile",
    "solenoidal_s",
    "lift_field_w",
    "MeshOptions",
    "triangulate",
    "FlowProblem",
    "SolverOptions",
    "solve_stokes",
    "solve_navier_stokes",
    "lift_boundary",
    "lift_volume",
    "compute_lift",
    "RestoringForce",
    "global_force",
    "find_equilibrium",
    "continuation",
]
