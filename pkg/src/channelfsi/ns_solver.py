"""Stationary Navier-Stokes in the channel with Taylor-Hood elements.

Unknown vector layout: ``[u1 (n2), u2 (n2), p (nv), multiplier]`` where the
last entry is the Lagrange multiplier enforcing zero pressure mean.  All
boundary P2 nodes carry strongly imposed Dirichlet data; their rows are
replaced by identity rows so the Newton correction vanishes there.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from . import linsys
from .extension import AnalyticField, InflowProfile, ScalarField, mms_forcing, mms_pair
from .fem import ElementGroup, PointLocator, element_groups, full_groups, p1_basis, p2_basis, p2_grad_ref
from .geometry import Geometry, Placement
from .mesh import BODY, GB, GL, GR, GT, Mesh, refine_uniform, triangulate

__all__ = [
    "NonConvergence",
    "SingularJacobian",
    "SolverOptions",
    "FlowProblem",
    "FlowField",
    "SolveReport",
    "apply_dirichlet",
    "solve_stokes",
    "solve_navier_stokes",
    "residual_norm",
    "uniqueness_probe",
    "h1_norm",
    "h1_distance",
    "error_norms",
    "mirror_symmetry_defect",
    "field_csv",
    "mms_study",
    "MMS_COLUMNS",
]

log = logging.getLogger(__name__)


class NonConvergence(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = list(history)


class SingularJacobian(linsys.SingularMatrix):
    pass


@dataclass(frozen=True)
class SolverOptions:
    picard_iters: int = 3
    newton_tol: float = 1e-10
    max_newton: int = 25
    max_halvings: int = 6
    linear_solver: str = "bordered"


@dataclass(frozen=True)
class FlowProblem:
    """Boundary-value problem data.

    ``dirichlet`` (optional) replaces the channel boundary data by the trace
    of a given field on every boundary part; used with ``forcing`` for
    manufactured solutions.
    """

    mu: float
    lam: float
    profile: InflowProfile | None
    geometry: Geometry
    placement: Placement = Placement()
    forcing: AnalyticField | None = None
    symmetric_mode: bool = False
    dirichlet: AnalyticField | None = None

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("viscosity must be positive")
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if self.dirichlet is None:
            if self.profile is None:
                raise ValueError("a profile is required unless explicit Dirichlet data are given")
            if self.profile.symmetric != self.symmetric_mode:
                raise ValueError("symmetric_mode needs a symmetric profile and vice versa")

    def with_lambda(self, lam: float) -> "FlowProblem":
        return FlowProblem(self.mu, lam, self.profile, self.geometry, self.placement, self.forcing, self.symmetric_mode, self.dirichlet)

    def with_placement(self, placement: Placement) -> "FlowProblem":
        return FlowProblem(self.mu, self.lam, self.profile, self.geometry, placement, self.forcing, self.symmetric_mode, self.dirichlet)


@dataclass
class SolveReport:
    method: str
    converged: bool
    residual: float
    history: list = field(default_factory=list)
    picard_iters: int = 0
    newton_iters: int = 0
    halvings: int = 0


@dataclass
class FlowField:
    mesh: Mesh
    x: np.ndarray
    lam: float
    mu: float
    report: SolveReport

    @property
    def u(self) -> np.ndarray:
        n2 = self.mesh.n_p2
        return self.x[: 2 * n2].reshape(2, n2)

    @property
    def p(self) -> np.ndarray:
        n2 = self.mesh.n_p2
        return self.x[2 * n2 : 2 * n2 + self.mesh.nv]

    @property
    def multiplier(self) -> float:
        return float(self.x[-1])

    def evaluate(self, points):
        """Velocity (N, 2), velocity gradient (N, 2, 2) and pressure (N,) at points."""
        loc = self.mesh.__dict__.get("_locator")
        if loc is None:
            loc = self.mesh._locator = PointLocator(self.mesh)
        cells, ref = loc.locate(points)
        return evaluate_in_cells(self, cells, ref)


def evaluate_in_cells(field: FlowField, cells, ref):
    mesh = field.mesh
    dofs2 = mesh.p2_cells[cells]
    X6 = mesh.p2_nodes[dofs2]
    N = p2_basis(ref)
    dN = p2_grad_ref(ref)
    J = np.einsum("nib,nia->nab", dN, X6)
    Jinv = np.linalg.inv(J)
    G = np.einsum("nib,nba->nia", dN, Jinv)
    u = field.u
    ue = u[:, dofs2]  # (2, n, 6)
    vals = np.einsum("ni,ani->na", N, ue)
    grads = np.einsum("ani,nib->nab", ue, G)
    p = np.einsum("ni,ni->n", p1_basis(ref), field.p[mesh.triangles[cells]])
    return vals, grads, p


# ------------------------------------------------------------ discretization


class Discretization:
    """Mesh-level precomputation: element data, fixed sparsity pattern, linear blocks."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        self.groups: list[ElementGroup] = element_groups(mesh)
        n2, nv = mesh.n_p2, mesh.nv
        self.n2, self.nv = n2, nv
        self.ndof = 2 * n2 + nv + 1
        bnodes = np.unique(np.concatenate([mesh.boundary_p2_nodes(t) for t in range(5)]))
        self.bnodes = bnodes
        self.dir_dofs = np.concatenate([bnodes, bnodes + n2])
        is_dir = np.zeros(self.ndof, dtype=bool)
        is_dir[self.dir_dofs] = True
        self.is_dir = is_dir

        rows, cols = [], []
        self._vv_local = []
        self._B_local = []
        for g in self.groups:
            vel = np.hstack([g.dofs2, g.dofs2 + n2])
            pres = 2 * n2 + g.dofs1
            rows.append(np.repeat(vel, 12, axis=1).ravel())
            cols.append(np.tile(vel, (1, 12)).ravel())
            rows.append(np.repeat(pres, 12, axis=1).ravel())
            cols.append(np.tile(vel, (1, 3)).ravel())
            rows.append(np.repeat(vel, 3, axis=1).ravel())
            cols.append(np.tile(pres, (1, 12)).ravel())
            K = np.einsum("nq,nqia,nqja->nij", g.w, g.G2, g.G2)
            self._vv_local.append(K)
            # B[n, k, c, i] = -int psi_k d_c N_i
            B = -np.einsum("nq,qk,nqic->nkci", g.w, g.N1, g.G2).reshape(len(g.cells), 3, 12)
            self._B_local.append(B)
        # pressure mass vector for the mean constraint
        m = np.zeros(nv)
        for g in self.groups:
            np.add.at(m, g.dofs1, np.einsum("nq,qk->nk", g.w, g.N1))
        self.pmass = m
        self.area = float(m.sum())
        last = self.ndof - 1
        rows.append(np.full(nv, last))
        cols.append(2 * n2 + np.arange(nv))
        rows.append(2 * n2 + np.arange(nv))
        cols.append(np.full(nv, last))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        self.keep = ~is_dir[rows]
        r = np.concatenate([rows[self.keep], self.dir_dofs])
        c = np.concatenate([cols[self.keep], self.dir_dofs])
        key = r * self.ndof + c
        ukey, inv = np.unique(key, return_inverse=True)
        self.map = inv
        self.nnz = len(ukey)
        ur = ukey // self.ndof
        self.indices = (ukey % self.ndof).astype(np.int32)
        self.indptr = np.concatenate([[0], np.cumsum(np.bincount(ur, minlength=self.ndof))]).astype(np.int32)
        self.n_dir = len(self.dir_dofs)
        # pressure dof used to regularize the bordered factorization
        self.pin = 2 * n2
        self._rows_all, self._cols_all = rows, cols
        self._K = None

    def _values(self, mu, conv=None):
        parts = []
        for k, g in enumerate(self.groups):
            n = len(g.cells)
            vv = np.zeros((n, 2, 6, 2, 6))
            base = mu * self._vv_local[k]
            if conv is not None:
                C, D = conv[k]
                base = base + C
            vv[:, 0, :, 0, :] = base
            vv[:, 1, :, 1, :] = base
            if conv is not None and D is not None:
                vv += D
            parts.append(vv.reshape(n, 144).ravel())
            B = self._B_local[k]
            parts.append(B.ravel())
            parts.append(np.transpose(B, (0, 2, 1)).ravel())
        parts.append(self.pmass)
        parts.append(self.pmass)
        return np.concatenate(parts)

    def matrix(self, mu, conv=None) -> sp.csr_matrix:
        """Linear operator (conv=None), Picard or Newton matrix; Dirichlet rows = identity."""
        vals = self._values(mu, conv)
        data = np.bincount(self.map, weights=np.concatenate([vals[self.keep], np.ones(self.n_dir)]), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices, self.indptr), shape=(self.ndof, self.ndof))

    def K(self, mu) -> sp.csr_matrix:
        if self._K is None or self._K[0] != mu:
            vals = self._values(mu)
            self._K = (mu, linsys.assemble(self._rows_all, self._cols_all, vals, (self.ndof, self.ndof)))
        return self._K[1]

    def qp_velocity(self, g: ElementGroup, u):
        ue = u[:, g.dofs2]  # (2, n, 6)
        U = np.einsum("qi,ani->nqa", g.N2, ue)
        G = np.einsum("ani,nqib->nqab", ue, g.G2)
        return U, G

    def convection(self, u, newton: bool):
        out = []
        for g in self.groups:
            U, G = self.qp_velocity(g, u)
            adv = np.einsum("nqb,nqjb->nqj", U, g.G2)
            C = np.einsum("nq,qi,nqj->nij", g.w, g.N2, adv)
            D = None
            if newton:
                NN = g.N2[:, :, None] * g.N2[:, None, :]
                D = np.einsum("nq,qij,nqab->naibj", g.w, NN, G)
            out.append((C, D))
        return out

    def nonlinear_vector(self, u):
        r = np.zeros(2 * self.n2)
        for g in self.groups:
            U, G = self.qp_velocity(g, u)
            conv = np.einsum("nqab,nqb->nqa", G, U)
            loc = np.einsum("nq,qi,nqa->nai", g.w, g.N2, conv)
            r[: self.n2] += np.bincount(g.dofs2.ravel(), loc[:, 0].ravel(), self.n2)
            r[self.n2 :] += np.bincount(g.dofs2.ravel(), loc[:, 1].ravel(), self.n2)
        return r

    def load_vector(self, forcing: AnalyticField | None):
        F = np.zeros(self.ndof)
        if forcing is None:
            return F
        for g in self.groups:
            pts = g.x.reshape(-1, 2)
            f = forcing(pts).reshape(len(g.cells), -1, 2)
            loc = np.einsum("nq,qi,nqa->nai", g.w, g.N2, f)
            F[: self.n2] += np.bincount(g.dofs2.ravel(), loc[:, 0].ravel(), self.n2)
            F[self.n2 : 2 * self.n2] += np.bincount(g.dofs2.ravel(), loc[:, 1].ravel(), self.n2)
        return F


def discretization(mesh: Mesh) -> Discretization:
    d = mesh.__dict__.get("_ns_disc")
    if d is None:
        d = Discretization(mesh)
        mesh._ns_disc = d
    return d


# ------------------------------------------------------------ boundary data


def apply_dirichlet(problem: FlowProblem, mesh: Mesh):
    """(dofs, values) of the strongly imposed velocity boundary data."""
    n2 = mesh.n_p2
    X = mesh.p2_nodes
    lam = problem.lam
    vals = {}
    if problem.dirichlet is not None:
        nodes = np.unique(np.concatenate([mesh.boundary_p2_nodes(t) for t in range(5)]))
        u = problem.dirichlet(X[nodes])
        return np.concatenate([nodes, nodes + n2]), np.concatenate([u[:, 0], u[:, 1]])
    prof = problem.profile
    order = [
        (GL, lambda x: lam * prof.V_in(x[:, 1])),
        (GR, lambda x: lam * prof.V_out(x[:, 1])),
        (GB, lambda x: np.full(len(x), lam * prof.U if problem.symmetric_mode else 0.0)),
        (GT, lambda x: np.full(len(x), lam * prof.U)),
        (BODY, lambda x: np.zeros(len(x))),
    ]
    for tag, fn in order:
        nodes = mesh.boundary_p2_nodes(tag)
        if len(nodes):
            for n, v in zip(nodes, fn(X[nodes])):
                vals[int(n)] = float(v)
    nodes = np.array(sorted(vals), dtype=np.int64)
    u1 = np.array([vals[n] for n in nodes])
    return np.concatenate([nodes, nodes + n2]), np.concatenate([u1, np.zeros(len(nodes))])


# ------------------------------------------------------------ solves


def _linear_solve(A, b, opts: SolverOptions, k: int):
    try:
        if opts.linear_solver == "iterative":
            x, _ = linsys.solve_iterative(A, b, tol=1e-13)
        elif opts.linear_solver == "lu":
            x, _ = linsys.solve_direct(A, b)
        else:
            x = linsys.BorderedFactorization(A, k).solve(b)
    except linsys.SingularMatrix as exc:
        raise SingularJacobian(str(exc), exc.pivot) from exc
    return x


class _State:
    def __init__(self, problem: FlowProblem, mesh: Mesh):
        self.problem = problem
        self.mesh = mesh
        self.disc = discretization(mesh)
        self.F = self.disc.load_vector(problem.forcing)
        self.dofs, self.vals = apply_dirichlet(problem, mesh)

    def initial(self, x0=None):
        d = self.disc
        x = np.zeros(d.ndof) if x0 is None else np.array(x0, dtype=float, copy=True)
        x[self.dofs] = self.vals
        return x

    def impose(self, x):
        # keep the strong boundary values bit-exact across updates
        x[self.dofs] = self.vals
        return x

    def residual(self, x, nonlinear=True):
        d = self.disc
        r = d.K(self.problem.mu) @ x - self.F
        if nonlinear:
            r[: 2 * d.n2] += d.nonlinear_vector(x[: 2 * d.n2].reshape(2, d.n2))
        r[d.dir_dofs] = 0.0
        return r


def solve_stokes(problem: FlowProblem, mesh: Mesh, opts: SolverOptions = SolverOptions()) -> FlowField:
    """Linear (convection-free) solve."""
    st = _State(problem, mesh)
    x = st.initial()
    r = st.residual(x, nonlinear=False)
    if np.any(r):
        x = st.impose(x - _linear_solve(st.disc.matrix(problem.mu), r, opts, st.disc.pin))
    res = float(np.linalg.norm(st.residual(x, nonlinear=False)))
    return FlowField(mesh, x, problem.lam, problem.mu, SolveReport("stokes", True, res, [res]))


def solve_navier_stokes(
    problem: FlowProblem,
    mesh: Mesh,
    opts: SolverOptions = SolverOptions(),
    initial=None,
) -> FlowField:
    """Picard warm-up (from Stokes or ``initial``) followed by Newton with step halving."""
    st = _State(problem, mesh)
    d = st.disc
    mu = problem.mu
    if initial is None:
        x = solve_stokes(problem, mesh, opts).x
    else:
        x = st.initial(initial.x if isinstance(initial, FlowField) else initial)
    history = []
    r = st.residual(x)
    rn = float(np.linalg.norm(r))
    history.append(rn)
    n_pic = n_new = n_half = 0
    for _ in range(opts.picard_iters):
        if rn <= opts.newton_tol:
            break
        M = d.matrix(mu, d.convection(x[: 2 * d.n2].reshape(2, d.n2), newton=False))
        x = st.impose(x - _linear_solve(M, r, opts, d.pin))
        r = st.residual(x)
        rn = float(np.linalg.norm(r))
        history.append(rn)
        n_pic += 1
    while rn > opts.newton_tol:
        if n_new >= opts.max_newton:
            raise NonConvergence(f"Newton did not reach {opts.newton_tol:g} (residual {rn:.3e})", history)
        J = d.matrix(mu, d.convection(x[: 2 * d.n2].reshape(2, d.n2), newton=True))
        dx = _linear_solve(J, r, opts, d.pin)
        alpha = 1.0
        for k in range(opts.max_halvings + 1):
            xn = st.impose(x - alpha * dx)
            rr = st.residual(xn)
            rnn = float(np.linalg.norm(rr))
            if rnn < rn or k == opts.max_halvings:
                break
            alpha *= 0.5
            n_half += 1
        if not np.isfinite(rnn):
            raise NonConvergence("Newton produced a non-finite residual", history)
        x, r, rn = xn, rr, rnn
        history.append(rn)
        n_new += 1
    report = SolveReport("picard+newton", True, rn, history, n_pic, n_new, n_half)
    return FlowField(mesh, x, problem.lam, mu, report)


# ------------------------------------------------------------ diagnostics


def residual_norm(field: FlowField, problem: FlowProblem) -> float:
    """Weak residual against all interior test functions, reassembled element by element."""
    mesh = field.mesh
    n2, nv = mesh.n_p2, mesh.nv
    mu = problem.mu
    u = field.u
    p = field.p
    r1 = np.zeros((2, n2))
    rp = np.zeros(nv)
    rm = 0.0
    for g in element_groups(mesh):
        ue = u[:, g.dofs2]
        U = np.einsum("qi,ani->nqa", g.N2, ue)
        G = np.einsum("ani,nqib->nqab", ue, g.G2)
        P = np.einsum("qk,nk->nq", g.N1, p[g.dofs1])
        div = G[..., 0, 0] + G[..., 1, 1]
        conv = np.einsum("nqab,nqb->nqa", G, U)
        f = np.zeros_like(U) if problem.forcing is None else problem.forcing(g.x.reshape(-1, 2)).reshape(U.shape)
        for a in range(2):
            # mu grad u_a . grad v - p d_a v + (conv_a - f_a) v
            loc = np.einsum("nq,nqb,nqib->ni", g.w, mu * G[:, :, a, :], g.G2)
            loc -= np.einsum("nq,nq,nqi->ni", g.w, P, g.G2[..., a])
            loc += np.einsum("nq,nq,qi->ni", g.w, conv[..., a] - f[..., a], g.N2)
            np.add.at(r1[a], g.dofs2, loc)
        np.add.at(rp, g.dofs1, -np.einsum("nq,nq,qk->nk", g.w, div, g.N1))
        rp_mass = np.einsum("nq,qk->nk", g.w, g.N1)
        np.add.at(rp, g.dofs1, rp_mass * field.multiplier)
        rm += float(np.einsum("nq,nq->", g.w, P))
    bnodes = np.unique(np.concatenate([mesh.boundary_p2_nodes(t) for t in range(5)]))
    r1[:, bnodes] = 0.0
    return float(np.sqrt(np.sum(r1**2) + np.sum(rp**2) + rm**2))


def _p2_stiff_mass(mesh: Mesh):
    cache = mesh.__dict__.setdefault("_fem_cache", {})
    if "h1" not in cache:
        rows, cols, vals = [], [], []
        for g in element_groups(mesh):
            S = np.einsum("nq,nqia,nqja->nij", g.w, g.G2, g.G2)
            M = np.einsum("nq,qi,qj->nij", g.w, g.N2, g.N2)
            rows.append(np.repeat(g.dofs2, 6, axis=1).ravel())
            cols.append(np.tile(g.dofs2, (1, 6)).ravel())
            vals.append((S + M).ravel())
        cache["h1"] = linsys.assemble(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), (mesh.n_p2, mesh.n_p2))
    return cache["h1"]


def h1_norm(field_or_mesh, u=None) -> float:
    """Discrete H^1 norm sqrt(sum_a u_a^T (S + M) u_a) of a P2 velocity."""
    if u is None:
        mesh, u = field_or_mesh.mesh, field_or_mesh.u
    else:
        mesh = field_or_mesh
    A = _p2_stiff_mass(mesh)
    return float(np.sqrt(max(sum(float(ua @ (A @ ua)) for ua in u), 0.0)))


def h1_distance(a: FlowField, b: FlowField) -> float:
    return h1_norm(a.mesh, a.u - b.u)


def error_norms(field: FlowField, exact_u: AnalyticField, exact_p: ScalarField | None = None) -> dict:
    """L2 / H1 velocity errors and mean-free L2 pressure error (degree-6 quadrature)."""
    mesh = field.mesh
    (g,) = full_groups(mesh, 6)
    ue = field.u[:, g.dofs2]
    U = np.einsum("qi,ani->nqa", g.N2, ue)
    G = np.einsum("ani,nqib->nqab", ue, g.G2)
    pts = g.x.reshape(-1, 2)
    uex, gex = exact_u.evaluate(pts)
    uex = uex.reshape(U.shape)
    gex = gex.reshape(G.shape)
    l2 = np.sqrt(np.einsum("nq,nqa->", g.w, (U - uex) ** 2))
    h1s = np.sqrt(np.einsum("nq,nqab->", g.w, (G - gex) ** 2))
    out = {"u_L2": float(l2), "u_H1_semi": float(h1s), "u_H1": float(np.hypot(l2, h1s))}
    if exact_p is not None:
        P = np.einsum("qk,nk->nq", g.N1, field.p[g.dofs1])
        pex = exact_p(pts).reshape(P.shape)
        e = P - pex
        area = g.w.sum()
        e = e - np.einsum("nq,nq->", g.w, e) / area
        out["p_L2"] = float(np.sqrt(np.einsum("nq,nq->", g.w, e**2)))
    return out


def uniqueness_probe(problem: FlowProblem, mesh: Mesh, n_starts: int = 3, seed: int = 0, opts: SolverOptions = SolverOptions(), scale: float | None = None):
    """Max pairwise discrete H^1 distance between solutions from random initial guesses."""
    if n_starts < 2:
        raise ValueError("need at least two starts")
    rng = np.random.default_rng(seed)
    d = discretization(mesh)
    scale = max(problem.lam, 1e-3) if scale is None else scale
    sols = []
    for _ in range(n_starts):
        x0 = np.zeros(d.ndof)
        x0[: 2 * d.n2] = scale * rng.standard_normal(2 * d.n2)
        sols.append(solve_navier_stokes(problem, mesh, opts, initial=x0))
    dist = 0.0
    for i in range(n_starts):
        for j in range(i + 1, n_starts):
            dist = max(dist, h1_distance(sols[i], sols[j]))
    return dist, sols


def mirror_permutation(points, tol=1e-12):
    tree = cKDTree(points)
    dist, idx = tree.query(points * np.array([1.0, -1.0]))
    if np.max(dist) > tol:
        raise ValueError("node set is not mirror symmetric")
    return idx


def mirror_symmetry_defect(field: FlowField) -> dict:
    """Max violations of u1 even, u2 odd, p even under x2 -> -x2."""
    mesh = field.mesh
    perm2 = mirror_permutation(mesh.p2_nodes)
    perm1 = perm2[: mesh.nv]
    u = field.u
    return {
        "u1": float(np.max(np.abs(u[0][perm2] - u[0]))),
        "u2": float(np.max(np.abs(u[1][perm2] + u[1]))),
        "p": float(np.max(np.abs(field.p[perm1] - field.p))),
    }


def field_csv(field: FlowField) -> str:
    out = io.StringIO()
    out.write("x1,x2,u1,u2,p\n")
    mesh = field.mesh
    u = field.u
    for k in range(mesh.nv):
        x1, x2 = mesh.vertices[k]
        out.write(f"{float(x1)!r},{float(x2)!r},{float(u[0, k])!r},{float(u[1, k])!r},{float(field.p[k])!r}\n")
    return out.getvalue()


MMS_COLUMNS = ("level", "dofs", "u_L2", "u_H1", "p_L2", "rate_u_L2", "rate_u_H1", "rate_p_L2", "newton_iters")


def mms_study(
    geometry: Geometry,
    placement: Placement = Placement(),
    size: float = 0.35,
    refinements: int = 3,
    mu: float = 1.0,
    opts: SolverOptions = SolverOptions(),
):
    """Forced Navier-Stokes with a manufactured solenoidal solution on uniformly refined meshes.

    Returns one row per mesh; rates are log2 error ratios against the
    previous level (NaN on the coarsest).
    """
    ue, pe = mms_pair(geometry.channel.H)
    problem = FlowProblem(mu, 1.0, None, geometry, placement, forcing=mms_forcing(ue, pe, mu), dirichlet=ue)
    mesh = triangulate(geometry, placement, size, body_size=size)
    rows = []
    prev = None
    for level in range(refinements + 1):
        fld = solve_navier_stokes(problem, mesh, opts)
        e = error_norms(fld, ue, pe)
        row = {"level": level, "dofs": mesh.n_velocity_dofs, "u_L2": e["u_L2"], "u_H1": e["u_H1"], "p_L2": e["p_L2"]}
        for k in ("u_L2", "u_H1", "p_L2"):
            row["rate_" + k] = float(np.log2(prev[k] / e[k])) if prev else float("nan")
        row["newton_iters"] = fld.report.newton_iters
        rows.append(row)
        prev = e
        if level < refinements:
            mesh = refine_uniform(mesh)
    return rows
