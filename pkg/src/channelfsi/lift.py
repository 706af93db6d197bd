"""Vertical fluid force on the body: boundary stress integral and volume identity."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .extension import AnalyticField, lift_field_w
from .fem import make_group, edge_ref_points, geometry_map, p1_basis, p2_basis, p2_grad_ref
from .geometry import Placement, body_extents, gaps
from .mesh import BODY, Mesh, MeshOptions
from .ns_solver import FlowField, FlowProblem, SolverOptions, discretization, solve_navier_stokes
from .parallel import parallel_map

__all__ = [
    "LiftResult",
    "stress_tensor",
    "lift_boundary",
    "lift_volume",
    "lift_volume_analytic",
    "compute_lift",
    "lift_curve",
    "relative_discrepancy",
    "noise_floor",
    "LIFT_CURVE_COLUMNS",
]

LIFT_CURVE_COLUMNS = ("h", "eps_b", "eps_t", "lift_boundary", "lift_volume", "discrepancy", "newton_iters")


def noise_floor(lam: float) -> float:
    return 1e-12 * max(1.0, lam)


def relative_discrepancy(boundary: float, volume: float, lam: float) -> float:
    return abs(boundary - volume) / max(abs(volume), 1e-12 * lam, 1e-300)


@dataclass
class LiftResult:
    value_boundary: float
    value_volume: float
    discrepancy: float
    size: float
    placement: Placement
    lam: float

    @property
    def relative(self) -> float:
        return relative_discrepancy(self.value_boundary, self.value_volume, self.lam)


def stress_tensor(field: FlowField, points) -> np.ndarray:
    """T = mu (grad u + grad u^T) - p I at the given points, shape (N, 2, 2)."""
    _, G, p = field.evaluate(points)
    T = field.mu * (G + np.transpose(G, (0, 2, 1)))
    T[:, 0, 0] -= p
    T[:, 1, 1] -= p
    return T


_EDGE_DIR = {0: np.array([1.0, 0.0]), 1: np.array([-1.0, 1.0]), 2: np.array([0.0, -1.0])}


def _body_edge_cells(mesh: Mesh):
    body = mesh.tag_edges(BODY)
    owner = np.full(mesh.ne, -1)
    local = np.full(mesh.ne, -1)
    for k in range(3):
        owner[mesh.tri_edges[:, k]] = np.arange(mesh.nt)
        local[mesh.tri_edges[:, k]] = k
    return owner[body], local[body]


def lift_boundary(field: FlowField, n_gauss: int = 4) -> float:
    """-e2 . int_{body} T n with n pointing into the body (out of the fluid).

    Gauss-Legendre with ``n_gauss`` points per curved edge (degree 2n-1).
    """
    mesh = field.mesh
    cells, locs = _body_edge_cells(mesh)
    s, ws = np.polynomial.legendre.leggauss(n_gauss)
    s = 0.5 * (s + 1.0)
    ws = 0.5 * ws
    total = 0.0
    u = field.u
    for k in range(3):
        sel = locs == k
        if not np.any(sel):
            continue
        c = cells[sel]
        ref = edge_ref_points(k, s)
        dofs2 = mesh.p2_cells[c]
        X6 = mesh.p2_nodes[dofs2]
        _, J = geometry_map(X6, ref)  # (n, q, 2, 2)
        tang = J @ _EDGE_DIR[k]
        # the fluid lies to the left of a CCW edge; the right normal points into the body
        nrm_scaled = np.stack([tang[..., 1], -tang[..., 0]], axis=-1)  # |t| n
        Jinv = np.linalg.inv(J)
        G2 = np.einsum("qib,nqba->nqia", p2_grad_ref(ref), Jinv)
        ue = u[:, dofs2]
        Gu = np.einsum("ani,nqib->nqab", ue, G2)
        P = np.einsum("qk,nk->nq", p1_basis(ref), field.p[mesh.triangles[c]])
        T = field.mu * (Gu + np.swapaxes(Gu, -1, -2))
        T[..., 0, 0] -= P
        T[..., 1, 1] -= P
        Tn2 = np.einsum("nqb,nqb->nq", T[..., 1, :], nrm_scaled)
        total += float(np.einsum("nq,q->", Tn2, ws))
    return -total


def _support_cells(mesh: Mesh, w: AnalyticField):
    if not w.support:
        return np.arange(mesh.nt)
    P = mesh.p2_nodes[mesh.p2_cells]
    lo = P.min(axis=1)
    hi = P.max(axis=1)
    m = np.zeros(mesh.nt, dtype=bool)
    for x0, x1, y0, y1 in w.support:
        m |= (hi[:, 0] >= x0) & (lo[:, 0] <= x1) & (hi[:, 1] >= y0) & (lo[:, 1] <= y1)
    return np.flatnonzero(m)


def _subdivisions(mesh: Mesh, cells, scale: float, per_scale: float, cap: int):
    if not math.isfinite(scale):
        return np.ones(len(cells), dtype=int)
    P = mesh.vertices[mesh.triangles[cells]]
    diam = np.max(np.linalg.norm(P - np.roll(P, 1, axis=1), axis=2), axis=1)
    return np.clip(np.ceil(per_scale * diam / scale), 1, cap).astype(int)


def lift_volume(
    field: FlowField,
    w: AnalyticField | None = None,
    convection: bool | None = None,
    forcing: AnalyticField | None = None,
) -> float:
    """Volume form of the lift tested with the P2 interpolant W of w.

    -int (u . grad u) . W - mu int grad u : grad W + int p div W (+ int f . W)

    evaluated with the solver's own element forms, i.e. minus the discrete
    momentum residual of the Dirichlet-free operator applied to W.  W equals
    e2 on the body nodes and vanishes on the walls; the pressure term is kept
    because W is only approximately solenoidal (it vanishes for the analytic
    w).  Two admissible w differ by an interior test function, so the value
    is independent of w up to the nonlinear solve tolerance.
    """
    mesh = field.mesh
    if w is None:
        w = lift_field_w(mesh.geometry, mesh.placement)
    if convection is None:
        convection = field.report.method != "stokes"
    d = discretization(mesh)
    n2 = d.n2
    W = np.zeros((n2, 2))
    nodes = np.flatnonzero(_in_support(mesh.p2_nodes, w))
    if len(nodes) == 0:
        return 0.0
    W[nodes] = w(mesh.p2_nodes[nodes])
    r = d.K(field.mu)[: 2 * n2] @ field.x
    if convection:
        r = r + d.nonlinear_vector(field.u)
    if forcing is not None:
        r = r - d.load_vector(forcing)[: 2 * n2]
    return -float(r[:n2] @ W[:, 0] + r[n2:] @ W[:, 1])


def _in_support(points, w: AnalyticField):
    if not w.support:
        return np.ones(len(points), dtype=bool)
    m = np.zeros(len(points), dtype=bool)
    for x0, x1, y0, y1 in w.support:
        m |= (points[:, 0] >= x0) & (points[:, 0] <= x1) & (points[:, 1] >= y0) & (points[:, 1] <= y1)
    return m


def lift_volume_analytic(
    field: FlowField,
    w: AnalyticField | None = None,
    degree: int = 6,
    convection: bool | None = None,
    per_scale: float = 4.0,
    max_subdivisions: int = 32,
) -> float:
    """-int (u . grad u) . w - mu int grad u : grad w, quadrature against the analytic w.

    The convective term is dropped for Stokes fields (``convection=None``
    decides from the solve report), so the identity matches the equations
    the field actually solves.  Cells larger than ``w.scale / per_scale``
    are integrated on uniformly subdivided copies of the quadrature rule,
    since the collars of w can be much thinner than the local mesh size.
    """
    mesh = field.mesh
    if w is None:
        w = lift_field_w(mesh.geometry, mesh.placement)
    if convection is None:
        convection = field.report.method != "stokes"
    cells = _support_cells(mesh, w)
    if len(cells) == 0:
        return 0.0
    subdiv = _subdivisions(mesh, cells, w.scale, per_scale, max_subdivisions)
    total = 0.0
    for m in np.unique(subdiv):
        g = make_group(mesh, cells[subdiv == m], degree, int(m))
        ue = field.u[:, g.dofs2]
        U = np.einsum("qi,ani->nqa", g.N2, ue)
        G = np.einsum("ani,nqib->nqab", ue, g.G2)
        wv, wg = w.evaluate(g.x.reshape(-1, 2))
        wv = wv.reshape(U.shape)
        wg = wg.reshape(G.shape)
        integrand = field.mu * np.einsum("nqab,nqab->nq", G, wg)
        if convection:
            conv = np.einsum("nqab,nqb->nqa", G, U)
            integrand = integrand + np.einsum("nqa,nqa->nq", conv, wv)
        total += float(np.einsum("nq,nq->", g.w, integrand))
    return -total


def compute_lift(field: FlowField, w: AnalyticField | None = None) -> LiftResult:
    lb = lift_boundary(field)
    lv = lift_volume(field, w)
    mesh = field.mesh
    return LiftResult(lb, lv, abs(lb - lv), mesh.size, mesh.placement, field.lam)


def _lift_row(args):
    problem, h, mesh_opts, solver_opts = args
    ext = body_extents(problem.geometry.shape, problem.placement.theta)
    eps_b, eps_t = gaps(problem.geometry.channel, ext, h)
    row = {"h": h, "eps_b": eps_b, "eps_t": eps_t}
    try:
        pl = Placement(h, problem.placement.theta)
        pb = problem.with_placement(pl)
        mesh = mesh_opts.build(problem.geometry, pl)
        fld = solve_navier_stokes(pb, mesh, solver_opts)
        res = compute_lift(fld)
        row.update(
            lift_boundary=res.value_boundary,
            lift_volume=res.value_volume,
            discrepancy=res.discrepancy,
            newton_iters=fld.report.newton_iters,
            error="",
        )
    except Exception as exc:  # recorded per row, never fatal
        row.update(lift_boundary=math.nan, lift_volume=math.nan, discrepancy=math.nan, newton_iters=-1, error=f"{type(exc).__name__}: {exc}")
    return row


def lift_curve(problem: FlowProblem, h_grid, mesh_opts: MeshOptions, solver_opts: SolverOptions = SolverOptions(), jobs: int = 1):
    """One converged solve per h; rows keyed by LIFT_CURVE_COLUMNS plus 'error'."""
    tasks = [(problem, float(h), mesh_opts, solver_opts) for h in h_grid]
    return parallel_map(_lift_row, tasks, jobs)
