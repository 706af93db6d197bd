"""Graded, boundary-fitted triangulations of the fluid domain with curved body edges.

The Delaunay refinement itself is delegated to the ``triangle`` library; this
module prepares the boundary discretization from a size field, drives the
area-constrained refinement, and builds the quadratic-node data structure.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np
import triangle as tr

from .geometry import (
    Geometry,
    GeometryError,
    Placement,
    body_extents,
    gaps,
    placed_curve,
    rotation,
    signed_distance,
)

__all__ = [
    "MeshFailure",
    "TAGS",
    "Mesh",
    "SizeField",
    "MeshOptions",
    "triangulate",
    "symmetrize",
    "symmetric_triangulate",
    "refine_uniform",
    "quality_report",
    "dump",
    "load",
]

TAGS = ("Gamma_b", "Gamma_t", "Gamma_l", "Gamma_r", "Body")
GB, GT, GL, GR, BODY = range(5)


class MeshFailure(RuntimeError):
    """The requested mesh cannot be generated (gap too small, element cap, ...)."""


@dataclass
class Mesh:
    """Conforming triangulation with quadratic (edge-midpoint) nodes.

    P2 node numbering: vertices ``0..nv-1`` then edge midpoints ``nv + e``.
    Local edge k of a triangle joins its vertices k and k+1 (mod 3), so the
    local P2 nodes are (v0, v1, v2, m01, m12, m20).
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    tri_edges: np.ndarray
    midpoints: np.ndarray
    boundary_edges: np.ndarray
    boundary_tags: np.ndarray
    vertex_param: np.ndarray
    size: float = float("nan")
    grading: float = float("nan")
    geometry: Geometry | None = None
    placement: Placement | None = None
    symmetric: bool = False
    curved: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.curved is None:
            body_e = self.boundary_edges[self.boundary_tags == BODY]
            mask = np.zeros(len(self.edges), dtype=bool)
            mask[body_e] = True
            self.curved = mask[self.tri_edges].any(axis=1)

    @property
    def nv(self) -> int:
        return len(self.vertices)

    @property
    def nt(self) -> int:
        return len(self.triangles)

    @property
    def ne(self) -> int:
        return len(self.edges)

    @property
    def n_p2(self) -> int:
        return self.nv + self.ne

    @property
    def n_velocity_dofs(self) -> int:
        return 2 * self.n_p2

    @property
    def p2_nodes(self) -> np.ndarray:
        return np.vstack([self.vertices, self.midpoints])

    @property
    def p2_cells(self) -> np.ndarray:
        return np.hstack([self.triangles, self.nv + self.tri_edges])

    def tag_edges(self, tag: str | int) -> np.ndarray:
        code = TAGS.index(tag) if isinstance(tag, str) else tag
        return self.boundary_edges[self.boundary_tags == code]

    def boundary_p2_nodes(self, tag: str | int) -> np.ndarray:
        e = self.tag_edges(tag)
        return np.unique(np.concatenate([self.edges[e].ravel(), self.nv + e]))

    def signed_areas(self) -> np.ndarray:
        v = self.vertices[self.triangles]
        a = v[:, 1] - v[:, 0]
        b = v[:, 2] - v[:, 0]
        return 0.5 * (a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])


def _build_edges(triangles):
    local = np.array([[0, 1], [1, 2], [2, 0]])
    all_e = triangles[:, local].reshape(-1, 2)
    key = np.sort(all_e, axis=1)
    edges, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    tri_edges = inv.reshape(-1, 3)
    boundary = np.flatnonzero(counts == 1)
    if np.any(counts > 2):
        raise MeshFailure("non-manifold triangulation")
    return edges, tri_edges, boundary


def _mid_param(ta, tb):
    d = np.mod(tb - ta + 0.5, 1.0) - 0.5
    return np.mod(ta + 0.5 * d, 1.0)


def _finish(vertices, triangles, vertex_param, geometry, placement, size, grading, symmetric=False) -> Mesh:
    """Edges, tags and P2 midpoints for a raw triangulation."""
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    a = vertices[triangles[:, 1]] - vertices[triangles[:, 0]]
    b = vertices[triangles[:, 2]] - vertices[triangles[:, 0]]
    neg = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0] < 0
    triangles[neg] = triangles[neg][:, [0, 2, 1]]
    edges, tri_edges, bnd = _build_edges(triangles)
    midpoints = 0.5 * (vertices[edges[:, 0]] + vertices[edges[:, 1]])
    ch = geometry.channel if geometry is not None else None
    on_body = ~np.isnan(vertex_param)
    tags = np.empty(len(bnd), dtype=np.int64)
    for k, e in enumerate(bnd):
        i, j = edges[e]
        pi, pj = vertices[i], vertices[j]
        if on_body[i] and on_body[j]:
            tags[k] = BODY
        elif pi[1] == ch.H and pj[1] == ch.H:
            tags[k] = GT
        elif pi[1] == -ch.H and pj[1] == -ch.H:
            tags[k] = GB
        elif pi[0] == -ch.Lrect and pj[0] == -ch.Lrect:
            tags[k] = GL
        elif pi[0] == ch.Lrect and pj[0] == ch.Lrect:
            tags[k] = GR
        else:
            raise MeshFailure(f"unclassifiable boundary edge {pi} -> {pj}")
    body_e = bnd[tags == BODY]
    if len(body_e):
        tm = _mid_param(vertex_param[edges[body_e, 0]], vertex_param[edges[body_e, 1]])
        midpoints[body_e] = placed_curve(geometry.shape, placement, tm)
    return Mesh(
        vertices,
        triangles,
        edges,
        tri_edges,
        midpoints,
        bnd,
        tags,
        vertex_param,
        float(size),
        float(grading),
        geometry,
        placement,
        symmetric,
    )


@dataclass(frozen=True)
class SizeField:
    """Target element size: min(size, body_size + grading*d_body, (d_body + d_wall)/layers).

    d_wall is the distance to the horizontal walls, so across a gap of width
    eps between body and wall the size never exceeds eps/layers.
    """

    geometry: Geometry
    placement: Placement
    size: float
    grading: float = 0.3
    body_size: float | None = None
    layers: float = 3.0

    def __call__(self, points, d_body=None):
        points = np.atleast_2d(points)
        if d_body is None:
            d_body = np.maximum(signed_distance_outside(self.geometry, self.placement, points), 0.0)
        H = self.geometry.channel.H
        d_wall = np.minimum(H - points[:, 1], points[:, 1] + H)
        bs = self.size * 0.5 if self.body_size is None else self.body_size
        s = np.minimum(self.size, bs + self.grading * d_body)
        return np.minimum(s, (d_body + d_wall) / self.layers)


def signed_distance_outside(geometry: Geometry, placement: Placement, points):
    """Distance to the placed body boundary for points known to be in the fluid."""
    R = rotation(placement.theta)
    local = (np.atleast_2d(points) - np.array([0.0, placement.h])) @ R
    return geometry.shape.unsigned_distance(local)


def _discretize(path_fn, sizes_fn, n_fine=4001, closed=False, cap_fn=None):
    """Parameters in [0,1] of boundary points spaced by the size field along a path.

    ``cap_fn(t)`` optionally bounds the spacing as a function of the path parameter.
    """
    t = np.linspace(0.0, 1.0, n_fine)
    p = path_fn(t)
    ds = np.linalg.norm(np.diff(p, axis=0), axis=1)
    s = sizes_fn(p)
    if cap_fn is not None:
        s = np.minimum(s, cap_fn(t))
    dens = 0.5 * (1.0 / s[:-1] + 1.0 / s[1:]) * ds
    cum = np.concatenate([[0.0], np.cumsum(dens)])
    n = max(int(math.ceil(cum[-1])), 3 if closed else 1)
    targets = np.linspace(0.0, cum[-1], n + 1)
    params = np.interp(targets, cum, t)
    return params[:-1] if closed else params


def _curvature_cap(shape, t):
    """Spacing bound radius * pi/3: at least six body edges per full turn of the
    tangent, so curved P2 edges stay close to their chords and never invert."""
    d1 = shape.d_curve(t)
    d2 = shape.dd_curve(t)
    speed = np.linalg.norm(d1, axis=1)
    kappa = np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]) / speed**3
    with np.errstate(divide="ignore"):
        return np.where(kappa > 0, (math.pi / 3.0) / kappa, np.inf)


def _interior_point(geometry: Geometry, placement: Placement):
    c = np.array([[0.0, placement.h]])
    if signed_distance(geometry.shape, placement, c)[0] < 0:
        return c[0]
    ext = body_extents(geometry.shape, placement.theta)
    g = np.linspace(-1, 1, 41)
    X, Y = np.meshgrid(g * ext.tau, placement.h + g * max(ext.delta_b, ext.delta_t))
    pts = np.column_stack([X.ravel(), Y.ravel()])
    d = signed_distance(geometry.shape, placement, pts)
    return pts[np.argmin(d)]


def _check_gaps(geometry, placement, sizer: SizeField, min_size):
    ext = body_extents(geometry.shape, placement.theta)
    eps_b, eps_t = gaps(geometry.channel, ext, placement.h)
    for name, eps in (("eps_b", eps_b), ("eps_t", eps_t)):
        if eps <= 0:
            raise MeshFailure(f"{name} = {eps:.4g} is not a positive gap")
        if eps / sizer.layers < min_size:
            raise MeshFailure(f"{name} = {eps:.4g} too small for {sizer.layers:g} layers at minimum size {min_size:.3g}")
    if geometry.channel.Lrect - ext.tau <= sizer.layers * min_size:
        raise MeshFailure("body too close to the inflow/outflow boundary")


def _pslg(geometry, placement, sizer, half=False):
    """Boundary vertices/segments; returns (vertices, segments, body_params, n_body)."""
    ch = geometry.channel
    H, L = ch.H, ch.Lrect
    shape = geometry.shape
    verts, params, segs = [], [], []

    def add_polyline(pts, prm, close=False):
        start = len(verts)
        verts.extend(list(pts))
        params.extend(list(prm))
        n = len(pts)
        for i in range(n - 1):
            segs.append((start + i, start + i + 1))
        if close:
            segs.append((start + n - 1, start))
        return start

    if not half:
        tb = _discretize(
            lambda t: placed_curve(shape, placement, t),
            lambda p: sizer(p, np.zeros(len(p))),
            closed=True,
            cap_fn=lambda t: _curvature_cap(shape, t),
        )
        add_polyline(placed_curve(shape, placement, tb), tb, close=True)
        n_body = len(tb)
        corners = [(-L, -H), (L, -H), (L, H), (-L, H)]
        for k in range(4):
            a, b = np.array(corners[k]), np.array(corners[(k + 1) % 4])
            path = lambda t, a=a, b=b: a + t[:, None] * (b - a)
            tt = _discretize(path, sizer)[:-1]
            pts = path(tt)
            # exact wall coordinates so tags can be decided by equality
            if a[1] == b[1]:
                pts[:, 1] = a[1]
            else:
                pts[:, 0] = a[0]
            verts.extend(list(pts))
            params.extend([np.nan] * len(pts))
        start = n_body
        m = len(verts) - start
        segs.extend([(start + i, start + (i + 1) % m) for i in range(m - 1)])
        segs.append((start + m - 1, start))
        return np.array(verts), np.array(segs), np.array(params), n_body

    cross = shape.axis_crossings()
    if len(cross) != 2:
        raise MeshFailure("symmetric meshing needs a body crossing the axis exactly twice")
    pc = shape.curve(cross)
    t_right, t_left = (cross[0], cross[1]) if pc[0, 0] > pc[1, 0] else (cross[1], cross[0])
    span = np.mod(t_left - t_right, 1.0)
    if shape.curve(np.array([t_right + 0.5 * span]))[0, 1] <= 0:
        raise MeshFailure("unexpected orientation of the upper body arc")
    arc = lambda t: placed_curve(shape, placement, t_right + span * t)
    ta = _discretize(
        arc, lambda p: sizer(p, np.zeros(len(p))), cap_fn=lambda t: _curvature_cap(shape, t_right + span * t)
    )
    body_params = np.mod(t_right + span * ta, 1.0)
    pts = arc(ta)
    pts[0, 1] = 0.0
    pts[-1, 1] = 0.0
    x_r, x_l = pts[0, 0], pts[-1, 0]
    add_polyline(pts, body_params)
    n_body = len(pts)
    # walls: (x_l,0) -> (-L,0) -> (-L,H) -> (L,H) -> (L,0) -> (x_r,0)
    chain = [(x_l, 0.0), (-L, 0.0), (-L, H), (L, H), (L, 0.0), (x_r, 0.0)]
    prev = n_body - 1
    for k in range(5):
        a, b = np.array(chain[k]), np.array(chain[k + 1])
        path = lambda t, a=a, b=b: a + t[:, None] * (b - a)
        tt = _discretize(path, sizer)
        pp = path(tt)
        if a[1] == b[1]:
            pp[:, 1] = a[1]
        else:
            pp[:, 0] = a[0]
        for q in pp[1:-1]:
            verts.append(q)
            params.append(np.nan)
            segs.append((prev, len(verts) - 1))
            prev = len(verts) - 1
        if k < 4:
            verts.append(pp[-1])
            params.append(np.nan)
            segs.append((prev, len(verts) - 1))
            prev = len(verts) - 1
    segs.append((prev, 0))
    return np.array(verts), np.array(segs), np.array(params), n_body


def _run_triangle(verts, segs, hole, sizer, max_triangles, max_passes=12):
    data = {"vertices": verts, "segments": segs}
    if hole is not None:
        data["holes"] = np.array([hole])
    out = tr.triangulate(data, "pq30Y")
    for _ in range(max_passes):
        v, t = out["vertices"], out["triangles"]
        cen = v[t].mean(axis=1)
        target = math.sqrt(3.0) / 4.0 * sizer(cen) ** 2
        a = v[t[:, 1]] - v[t[:, 0]]
        b = v[t[:, 2]] - v[t[:, 0]]
        area = 0.5 * np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])
        if np.all(area <= 1.2 * target):
            break
        if len(t) > max_triangles:
            raise MeshFailure(f"element cap exceeded ({len(t)} > {max_triangles})")
        out["triangle_max_area"] = np.minimum(target, area)
        out = tr.triangulate(out, "rpq30aY")
    if len(out["triangles"]) > max_triangles:
        raise MeshFailure(f"element cap exceeded ({len(out['triangles'])} > {max_triangles})")
    return out["vertices"], out["triangles"]


def triangulate(
    geometry: Geometry,
    placement: Placement,
    size: float,
    grading: float = 0.3,
    *,
    body_size: float | None = None,
    layers: float = 3.0,
    min_size: float | None = None,
    max_triangles: int = 200_000,
) -> Mesh:
    """Quality (30 degree) Delaunay mesh of the channel minus the placed body."""
    if size <= 0 or grading <= 0:
        raise MeshFailure("size and grading must be positive")
    sizer = SizeField(geometry, placement, size, grading, body_size, layers)
    min_size = size / 64.0 if min_size is None else min_size
    _check_gaps(geometry, placement, sizer, min_size)
    verts, segs, params, n_body = _pslg(geometry, placement, sizer)
    v, t = _run_triangle(verts, segs, _interior_point(geometry, placement), sizer, max_triangles)
    vparam = np.full(len(v), np.nan)
    vparam[:n_body] = params[:n_body]
    return _finish(v, t, vparam, geometry, placement, size, grading)


def _placed_is_symmetric(geometry: Geometry, placement: Placement, tol=1e-10):
    if placement.h != 0.0:
        return False
    t = np.linspace(0.0, 1.0, 257, endpoint=False)
    p = placed_curve(geometry.shape, placement, t) * np.array([1.0, -1.0])
    return bool(np.max(np.abs(signed_distance(geometry.shape, placement, p))) <= tol)


def symmetric_triangulate(
    geometry: Geometry,
    placement: Placement,
    size: float,
    grading: float = 0.3,
    *,
    body_size: float | None = None,
    layers: float = 3.0,
    max_triangles: int = 200_000,
) -> Mesh:
    """Mesh of the upper half reflected across x2 = 0; vertex set closed under mirroring."""
    if placement.theta != 0.0 or not _placed_is_symmetric(geometry, placement):
        raise MeshFailure("symmetric meshing needs a mirror-symmetric body at h = 0, theta = 0")
    sizer = SizeField(geometry, placement, size, grading, body_size, layers)
    _check_gaps(geometry, placement, sizer, size / 64.0)
    verts, segs, params, n_body = _pslg(geometry, placement, sizer, half=True)
    v, t = _run_triangle(verts, segs, None, sizer, max_triangles // 2)
    vparam = np.full(len(v), np.nan)
    vparam[:n_body] = params[:n_body]
    # mirror: vertices with x2 == 0 are shared
    upper = v[:, 1] > 0.0
    nv = len(v)
    mirror_index = np.arange(nv)
    n_new = int(upper.sum())
    mirror_index[upper] = nv + np.arange(n_new)
    v_all = np.vstack([v, v[upper] * np.array([1.0, -1.0])])
    shape = geometry.shape
    vp_low = np.full(n_new, np.nan)
    body_up = upper & ~np.isnan(vparam)
    if np.any(body_up):
        vp_low[mirror_index[body_up] - nv] = shape.closest_param(v[body_up] * np.array([1.0, -1.0]))
    vparam_all = np.concatenate([vparam, vp_low])
    t_low = mirror_index[t][:, [0, 2, 1]]
    mesh = _finish(v_all, np.vstack([t, t_low]), vparam_all, geometry, placement, size, grading, symmetric=True)
    # copy mirrored curved midpoints so that the P2 node set is exactly symmetric
    mirror_all = np.concatenate([mirror_index, np.flatnonzero(upper)])
    key = {tuple(e): k for k, e in enumerate(mesh.edges)}
    for e in mesh.tag_edges(BODY):
        i, j = mesh.edges[e]
        if v_all[i, 1] > 0 or v_all[j, 1] > 0:
            mi, mj = mirror_all[i], mirror_all[j]
            em = key[(min(mi, mj), max(mi, mj))]
            mesh.midpoints[em] = mesh.midpoints[e] * np.array([1.0, -1.0])
    return mesh


@dataclass(frozen=True)
class MeshOptions:
    """Mesh request; ``symmetric`` meshes mirror-symmetric configurations symmetrically.

    ``body_size=None`` resolves the body boundary at a quarter of ``size``.
    """

    size: float = 0.12
    grading: float = 0.3
    body_size: float | None = None
    layers: float = 3.0
    symmetric: bool = False

    @property
    def resolved_body_size(self) -> float:
        return self.size / 4.0 if self.body_size is None else self.body_size

    def build(self, geometry: Geometry, placement: Placement) -> Mesh:
        bs = self.resolved_body_size
        if self.symmetric and placement.theta == 0.0 and _placed_is_symmetric(geometry, placement):
            return symmetric_triangulate(
                geometry, placement, self.size, self.grading, body_size=bs, layers=self.layers
            )
        return triangulate(geometry, placement, self.size, self.grading, body_size=bs, layers=self.layers)


def symmetrize(mesh: Mesh) -> Mesh:
    """Regenerate ``mesh`` with an exactly mirror-symmetric node set."""
    if mesh.geometry is None or mesh.placement is None:
        raise MeshFailure("mesh carries no geometry")
    return symmetric_triangulate(mesh.geometry, mesh.placement, mesh.size, mesh.grading)


def refine_uniform(mesh: Mesh) -> Mesh:
    """Red refinement: every triangle split into four; new body vertices on the curve."""
    nv = mesh.nv
    v = np.vstack([mesh.vertices, mesh.midpoints])
    vparam = np.concatenate([mesh.vertex_param, np.full(mesh.ne, np.nan)])
    body_e = mesh.tag_edges(BODY)
    if len(body_e):
        vparam[nv + body_e] = _mid_param(
            mesh.vertex_param[mesh.edges[body_e, 0]], mesh.vertex_param[mesh.edges[body_e, 1]]
        )
    t = mesh.triangles
    m = nv + mesh.tri_edges  # m01, m12, m20
    children = np.vstack(
        [
            np.column_stack([t[:, 0], m[:, 0], m[:, 2]]),
            np.column_stack([m[:, 0], t[:, 1], m[:, 1]]),
            np.column_stack([m[:, 2], m[:, 1], t[:, 2]]),
            np.column_stack([m[:, 0], m[:, 1], m[:, 2]]),
        ]
    )
    return _finish(v, children, vparam, mesh.geometry, mesh.placement, mesh.size / 2.0, mesh.grading, mesh.symmetric)


def quality_report(mesh: Mesh) -> dict:
    """Minimum angle (degrees), maximum aspect ratio R/(2r) and entity counts."""
    p = mesh.vertices[mesh.triangles]
    e = [p[:, 1] - p[:, 0], p[:, 2] - p[:, 1], p[:, 0] - p[:, 2]]
    ln = np.stack([np.linalg.norm(x, axis=1) for x in e], axis=1)
    angles = []
    for k in range(3):
        a, b = -e[k - 1], e[k]
        c = (a * b).sum(axis=1) / (ln[:, k - 1] * ln[:, k])
        angles.append(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))
    area = np.abs(mesh.signed_areas())
    s = ln.sum(axis=1) / 2.0
    r_in = area / s
    r_circ = ln.prod(axis=1) / (4.0 * area)
    counts = {TAGS[k]: int(np.sum(mesh.boundary_tags == k)) for k in range(5)}
    return {
        "min_angle": float(np.min(angles)),
        "max_aspect": float(np.max(r_circ / (2.0 * r_in))),
        "vertices": mesh.nv,
        "triangles": mesh.nt,
        "edges": mesh.ne,
        "velocity_dofs": mesh.n_velocity_dofs,
        "boundary_edges": counts,
    }


def dump(mesh: Mesh) -> str:
    """Plain-text mesh: header, 'v x y', 't i j k', 'e i j tag mx my' lines."""
    out = io.StringIO()
    out.write(f"channelfsi-mesh 1 {mesh.nv} {mesh.nt} {len(mesh.boundary_edges)}\n")
    for x, y in mesh.vertices:
        out.write(f"v {float(x)!r} {float(y)!r}\n")
    for a, b, c in mesh.triangles:
        out.write(f"t {a} {b} {c}\n")
    for e, tag in zip(mesh.boundary_edges, mesh.boundary_tags):
        i, j = mesh.edges[e]
        mx, my = mesh.midpoints[e]
        out.write(f"e {i} {j} {TAGS[tag]} {float(mx)!r} {float(my)!r}\n")
    return out.getvalue()


def load(text: str) -> Mesh:
    """Inverse of :func:`dump` (the result carries no geometry reference)."""
    lines = text.strip().splitlines()
    head = lines[0].split()
    if head[0] != "channelfsi-mesh":
        raise ValueError("not a channelfsi mesh dump")
    nv, nt, nb = map(int, head[2:5])
    body = lines[1:]
    v = np.array([[float(x) for x in ln.split()[1:3]] for ln in body[:nv]])
    t = np.array([[int(x) for x in ln.split()[1:4]] for ln in body[nv : nv + nt]], dtype=np.int64)
    edges, tri_edges, bnd = _build_edges(t)
    midpoints = 0.5 * (v[edges[:, 0]] + v[edges[:, 1]])
    key = {tuple(e): k for k, e in enumerate(edges)}
    b_edges, b_tags = [], []
    vparam = np.full(nv, np.nan)
    for ln in body[nv + nt : nv + nt + nb]:
        parts = ln.split()
        i, j = int(parts[1]), int(parts[2])
        k = key[(min(i, j), max(i, j))]
        b_edges.append(k)
        code = TAGS.index(parts[3])
        b_tags.append(code)
        midpoints[k] = [float(parts[4]), float(parts[5])]
        if code == BODY:
            vparam[i] = vparam[j] = 0.0
    return Mesh(v, t, edges, tri_edges, midpoints, np.array(b_edges), np.array(b_tags), vparam)
