"""Taylor-Hood (P2 velocity / P1 pressure) element machinery on isoparametric triangles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .mesh import Mesh

__all__ = [
    "triangle_rule",
    "p2_basis",
    "p2_grad_ref",
    "p1_basis",
    "ElementGroup",
    "element_groups",
    "edge_ref_points",
    "PointLocator",
    "make_group",
    "subdivided_rule",
    "geometry_map",
]

# Symmetric Gaussian rules on the reference triangle (0,0),(1,0),(0,1);
# weights sum to 1 and are scaled by the reference area 1/2 below.
_RULES = {
    4: (
        [(0.44594849091596488632, 0.22338158967801146570), (0.091576213509770743460, 0.10995174365532186764)],
        [],
    ),
    6: (
        [(0.24928674517091042129, 0.11678627572637936603), (0.063089014491502228340, 0.050844906370206816921)],
        [((0.053145049844816947353, 0.31035245103378440542), 0.082851075618373575194)],
    ),
}


def triangle_rule(degree: int):
    """(points (nq, 2), weights (nq,)) exact for polynomials of the given degree (4 or 6)."""
    if degree not in _RULES:
        raise ValueError(f"no rule of degree {degree}")
    orbits3, orbits6 = _RULES[degree]
    pts, wts = [], []
    for a, w in orbits3:
        b = 1.0 - 2.0 * a
        for bary in ((a, a, b), (a, b, a), (b, a, a)):
            pts.append(bary[1:])
            wts.append(w)
    for (a, b), w in orbits6:
        c = 1.0 - a - b
        for bary in ((a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)):
            pts.append(bary[1:])
            wts.append(w)
    return np.array(pts), 0.5 * np.array(wts)


def p1_basis(ref):
    xi, eta = ref[:, 0], ref[:, 1]
    return np.column_stack([1.0 - xi - eta, xi, eta])


def p2_basis(ref):
    L0, L1, L2 = p1_basis(ref).T
    return np.column_stack(
        [L0 * (2 * L0 - 1), L1 * (2 * L1 - 1), L2 * (2 * L2 - 1), 4 * L0 * L1, 4 * L1 * L2, 4 * L2 * L0]
    )


_DL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


def p2_grad_ref(ref):
    """(nq, 6, 2) reference gradients of the P2 basis."""
    L = p1_basis(ref)
    n = len(ref)
    g = np.empty((n, 6, 2))
    for i in range(3):
        g[:, i, :] = (4 * L[:, i] - 1)[:, None] * _DL[i]
    for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        g[:, 3 + k, :] = 4 * (L[:, i, None] * _DL[j] + L[:, j, None] * _DL[i])
    return g


def edge_ref_points(k: int, s):
    """Reference coordinates along local edge k (from vertex k to vertex k+1)."""
    s = np.asarray(s, dtype=float)
    if k == 0:
        return np.column_stack([s, 0 * s])
    if k == 1:
        return np.column_stack([1 - s, s])
    return np.column_stack([0 * s, 1 - s])


def geometry_map(X6, ref):
    """Physical points (n, nq, 2) and Jacobians (n, nq, 2, 2) of the P2 map."""
    N = p2_basis(ref)
    dN = p2_grad_ref(ref)
    x = np.einsum("qi,nia->nqa", N, X6)
    J = np.einsum("qib,nia->nqab", dN, X6)
    return x, J


@dataclass
class ElementGroup:
    """Quadrature data for a set of cells sharing one rule."""

    cells: np.ndarray
    dofs2: np.ndarray  # (n, 6) P2 node ids
    dofs1: np.ndarray  # (n, 3) vertex ids
    x: np.ndarray  # (n, nq, 2) physical quadrature points
    w: np.ndarray  # (n, nq) weights times |det J|
    N2: np.ndarray  # (nq, 6)
    N1: np.ndarray  # (nq, 3)
    G2: np.ndarray  # (n, nq, 6, 2) physical P2 gradients
    degree: int


def subdivided_rule(degree: int, m: int):
    """The degree rule copied onto the m*m congruent subtriangles of the reference cell."""
    ref, wq = triangle_rule(degree)
    if m == 1:
        return ref, wq
    pts, wts = [], []
    h = 1.0 / m
    for i in range(m):
        for j in range(m - i):
            o = np.array([i * h, j * h])
            pts.append(o + h * ref)  # upright subtriangle
            if i + j < m - 1:
                pts.append(o + h * (np.array([1.0, 1.0]) - ref))  # flipped one
    n_sub = len(pts)
    return np.vstack(pts), np.tile(wq, n_sub) / n_sub


def make_group(mesh: Mesh, cells, degree, subdivisions: int = 1):
    ref, wq = subdivided_rule(degree, subdivisions)
    dofs2 = mesh.p2_cells[cells]
    X6 = mesh.p2_nodes[dofs2]
    x, J = geometry_map(X6, ref)
    det = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    if np.any(det <= 0):
        raise ValueError("inverted isoparametric element")
    inv = np.empty_like(J)
    inv[..., 0, 0] = J[..., 1, 1] / det
    inv[..., 1, 1] = J[..., 0, 0] / det
    inv[..., 0, 1] = -J[..., 0, 1] / det
    inv[..., 1, 0] = -J[..., 1, 0] / det
    dN = p2_grad_ref(ref)
    # grad_x N = J^{-T} grad_ref N
    G2 = np.einsum("qib,nqba->nqia", dN, inv)
    return ElementGroup(
        cells, dofs2, mesh.triangles[cells], x, det * wq[None, :], p2_basis(ref), p1_basis(ref), G2, degree
    )


def element_groups(mesh: Mesh, straight_degree: int = 4, curved_degree: int = 6):
    """Straight cells with the degree-4 rule, curved (body-adjacent) cells with degree 6."""
    key = ("groups", straight_degree, curved_degree)
    cache = mesh.__dict__.setdefault("_fem_cache", {})
    if key not in cache:
        groups = []
        straight = np.flatnonzero(~mesh.curved)
        curved = np.flatnonzero(mesh.curved)
        if len(straight):
            groups.append(make_group(mesh, straight, straight_degree))
        if len(curved):
            groups.append(make_group(mesh, curved, curved_degree))
        cache[key] = groups
    return cache[key]


def full_groups(mesh: Mesh, degree: int):
    """All cells with a single rule (used for error norms)."""
    cache = mesh.__dict__.setdefault("_fem_cache", {})
    key = ("full", degree)
    if key not in cache:
        cache[key] = [make_group(mesh, np.arange(mesh.nt), degree)]
    return cache[key]


class PointLocator:
    """Find the cell and reference coordinates of physical points (P2 geometry)."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.X6 = mesh.p2_nodes[mesh.p2_cells]
        self.tree = cKDTree(self.X6.mean(axis=1))

    def _invert(self, cells, pts, iters=25):
        ref = np.full((len(cells), 2), 1.0 / 3.0)
        X6 = self.X6[cells]
        for _ in range(iters):
            N = p2_basis(ref)
            dN = p2_grad_ref(ref)
            x = np.einsum("ni,nia->na", N, X6)
            J = np.einsum("nib,nia->nab", dN, X6)
            r = pts - x
            step = np.linalg.solve(J, r[..., None])[..., 0]
            ref = ref + step
            if np.max(np.abs(step)) < 1e-15:
                break
        return ref

    def locate(self, points, k: int = 12, tol: float = 1e-10):
        """(cells, ref) for each point; raises ValueError for points outside the mesh."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        _, cand = self.tree.query(points, k=min(k, self.mesh.nt))
        cand = np.atleast_2d(cand)
        if cand.ndim == 1:
            cand = cand[:, None]
        cells = np.full(len(points), -1)
        refs = np.zeros((len(points), 2))
        for j in range(cand.shape[1]):
            todo = np.flatnonzero(cells < 0)
            if len(todo) == 0:
                break
            c = cand[todo, j]
            ref = self._invert(c, points[todo])
            L = np.column_stack([1 - ref.sum(axis=1), ref])
            ok = np.all(L >= -tol, axis=1)
            cells[todo[ok]] = c[ok]
            refs[todo[ok]] = ref[ok]
        if np.any(cells < 0):
            bad = points[cells < 0][0]
            raise ValueError(f"point {bad} is outside the mesh")
        return cells, refs
