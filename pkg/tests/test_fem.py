from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from channelfsi.fem import PointLocator, p1_basis, p2_basis, p2_grad_ref, subdivided_rule, triangle_rule
from channelfsi.geometry import Channel, Ellipse, Geometry, Placement
from channelfsi.mesh import triangulate

NODES = np.array([[0, 0], [1, 0], [0, 1], [0.5, 0], [0.5, 0.5], [0, 0.5]], dtype=float)


def monomial_integral(i, j):
    # int over reference triangle of x^i y^j = i! j! / (i + j + 2)!
    return math.factorial(i) * math.factorial(j) / math.factorial(i + j + 2)


@pytest.mark.parametrize("degree", [4, 6])
@pytest.mark.parametrize("m", [1, 2, 3])
def test_rules_are_exact_to_their_degree(degree, m):
    pts, w = subdivided_rule(degree, m)
    assert_allclose(w.sum(), 0.5, rtol=1e-14)
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            q = w @ (pts[:, 0] ** i * pts[:, 1] ** j)
            assert_allclose(q, monomial_integral(i, j), rtol=1e-12, atol=1e-16)


def test_unknown_rule():
    with pytest.raises(ValueError):
        triangle_rule(5)


def test_p2_basis_nodal_property_and_partition_of_unity(rng):
    assert_allclose(p2_basis(NODES), np.eye(6), atol=1e-15)
    ref = rng.uniform(0, 0.5, (50, 2))
    assert_allclose(p2_basis(ref).sum(axis=1), 1.0, atol=1e-14)
    assert_allclose(p1_basis(ref).sum(axis=1), 1.0, atol=1e-14)
    assert_allclose(p2_grad_ref(ref).sum(axis=1), 0.0, atol=1e-13)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.45), st.floats(0.05, 0.45))
def test_p2_gradient_matches_finite_differences(x, y):
    p = np.array([[x, y]])
    eps = 1e-6
    g = p2_grad_ref(p)[0]
    for b in range(2):
        d = np.zeros(2)
        d[b] = eps
        fd = (p2_basis(p + d) - p2_basis(p - d))[0] / (2 * eps)
        assert_allclose(g[:, b], fd, atol=1e-8)


def test_point_locator_round_trips(rng):
    g = Geometry(Channel(1.0, 1.5), Ellipse(0.3, 0.3))
    m = triangulate(g, Placement(), 0.3)
    loc = PointLocator(m)
    cells = rng.integers(0, m.nt, 200)
    ref = rng.dirichlet([1, 1, 1], 200)[:, 1:]
    X6 = m.p2_nodes[m.p2_cells[cells]]
    pts = np.einsum("ni,nia->na", p2_basis(ref), X6)
    found, fref = loc.locate(pts)
    back = np.einsum("ni,nia->na", p2_basis(fref), m.p2_nodes[m.p2_cells[found]])
    assert_allclose(back, pts, atol=1e-12)
    with pytest.raises(ValueError):
        loc.locate([[0.0, 0.0]])  # body centre is not fluid
