"""Channel, immersed body shapes, placements and the derived extents/gaps."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import ellipe

__all__ = [
    "GeometryError",
    "Channel",
    "BodyShape",
    "Ellipse",
    "SmoothedPolygon",
    "Placement",
    "Extents",
    "Geometry",
    "body_extents",
    "gaps",
    "is_admissible",
    "default_margin",
    "signed_distance",
    "boundary_sample",
    "placed_curve",
    "rotation",
]


class GeometryError(ValueError):
    """Invalid channel/body/placement data."""


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Channel:
    """The rectangle (-Lrect, Lrect) x (-H, H)."""

    H: float
    Lrect: float

    def __post_init__(self):
        if not (self.Lrect > self.H > 0):
            raise GeometryError(f"need Lrect > H > 0, got Lrect={self.Lrect}, H={self.H}")

    @property
    def area(self) -> float:
        return 4.0 * self.H * self.Lrect


class BodyShape:
    """Closed, positively oriented boundary curve parametrized by t in [0, 1).

    Subclasses provide ``curve``, ``d_curve`` (dc/dt), ``dd_curve``,
    ``support`` and ``closest_param``.
    """

    kind: str = ""

    def curve(self, t):
        raise NotImplementedError

    def d_curve(self, t):
        raise NotImplementedError

    def dd_curve(self, t):
        raise NotImplementedError

    def support(self, direction) -> float:
        """max over the boundary of p . direction."""
        raise NotImplementedError

    def closest_param(self, points) -> np.ndarray:
        raise NotImplementedError

    @property
    def area(self) -> float:
        raise NotImplementedError

    @property
    def perimeter(self) -> float:
        raise NotImplementedError

    def outward_normal(self, t):
        d = self.d_curve(t)
        n = np.column_stack([d[:, 1], -d[:, 0]])
        return n / np.linalg.norm(n, axis=1)[:, None]

    def inside(self, points) -> np.ndarray:
        raise NotImplementedError

    def unsigned_distance(self, points) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return np.linalg.norm(points - self.curve(self.closest_param(points)), axis=1)

    def distance(self, points) -> np.ndarray:
        """Signed distance in the body frame (negative inside)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        t = self.closest_param(points)
        d = np.linalg.norm(points - self.curve(t), axis=1)
        return np.where(self.inside(points), -d, d)

    def is_mirror_symmetric(self, tol: float = 1e-10) -> bool:
        """True when the boundary is invariant under x2 -> -x2."""
        t = np.linspace(0.0, 1.0, 257, endpoint=False)
        p = self.curve(t)
        p[:, 1] *= -1.0
        return bool(np.max(np.abs(self.distance(p))) <= tol)

    def axis_crossings(self) -> np.ndarray:
        """Sorted parameters where the unrotated boundary crosses x2 = 0."""
        t = np.linspace(0.0, 1.0, 4097)
        y = self.curve(t)[:, 1]
        roots = []
        for i in range(len(t) - 1):
            if y[i] == 0.0:
                roots.append(t[i])
            elif y[i] * y[i + 1] < 0:
                roots.append(brentq(lambda s: self.curve(np.array([s]))[0, 1], t[i], t[i + 1], xtol=1e-15))
        roots = np.unique(np.mod(np.array(roots), 1.0))
        return roots


@dataclass(frozen=True)
class Ellipse(BodyShape):
    """Ellipse with semi-axes a (along x1) and b (along x2); a == b is a disk."""

    a: float
    b: float
    kind: str = field(default="ellipse", init=False)

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise GeometryError(f"degenerate ellipse a={self.a}, b={self.b}")

    def curve(self, t):
        w = 2.0 * np.pi * np.asarray(t, dtype=float)
        return np.column_stack([self.a * np.cos(w), self.b * np.sin(w)])

    def d_curve(self, t):
        w = 2.0 * np.pi * np.asarray(t, dtype=float)
        k = 2.0 * np.pi
        return np.column_stack([-k * self.a * np.sin(w), k * self.b * np.cos(w)])

    def dd_curve(self, t):
        w = 2.0 * np.pi * np.asarray(t, dtype=float)
        k2 = (2.0 * np.pi) ** 2
        return np.column_stack([-k2 * self.a * np.cos(w), -k2 * self.b * np.sin(w)])

    def support(self, direction) -> float:
        d1, d2 = direction
        return math.hypot(self.a * d1, self.b * d2)

    @property
    def area(self) -> float:
        return math.pi * self.a * self.b

    @property
    def perimeter(self) -> float:
        big, small = max(self.a, self.b), min(self.a, self.b)
        return 4.0 * big * ellipe(1.0 - (small / big) ** 2)

    def inside(self, points):
        points = np.atleast_2d(points)
        return (points[:, 0] / self.a) ** 2 + (points[:, 1] / self.b) ** 2 < 1.0

    def closest_param(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        coarse = np.linspace(0.0, 1.0, 512, endpoint=False)
        c = self.curve(coarse)
        d2 = ((points[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
        t = coarse[np.argmin(d2, axis=1)]
        for _ in range(30):
            r = self.curve(t) - points
            d1 = self.d_curve(t)
            g = (r * d1).sum(axis=1)
            gp = (d1 * d1).sum(axis=1) + (r * self.dd_curve(t)).sum(axis=1)
            gp = np.where(gp > 1e-300, gp, (d1 * d1).sum(axis=1))
            step = np.clip(g / gp, -1.0 / 512, 1.0 / 512)
            t = t - step
            if np.max(np.abs(step)) < 1e-16:
                break
        return np.mod(t, 1.0)


def _left(u):
    return np.array([-u[1], u[0]])


def _polygon_area(v):
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _segments_cross(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    o1, o2 = orient(p1, p2, q1), orient(p1, p2, q2)
    o3, o4 = orient(q1, q2, p1), orient(q1, q2, p2)
    return o1 * o2 < 0 and o3 * o4 < 0


class SmoothedPolygon(BodyShape):
    """Simple polygon whose corners are replaced by tangent circular arcs.

    The rounded boundary is C^{1,1} (bounded, piecewise constant curvature).
    Vertices are shifted so that the area barycenter of the rounded shape is
    at the origin; clockwise input is reversed.  ``radius=None`` uses 10% of
    the shortest edge.
    """

    kind = "smoothed-polygon"

    def __init__(self, vertices, radius: float | None = None):
        v = np.asarray(vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise GeometryError("polygon needs at least 3 vertices")
        area = _polygon_area(v)
        if abs(area) < 1e-14:
            raise GeometryError("degenerate polygon (zero area)")
        if area < 0:
            v = v[::-1].copy()
        n = len(v)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_cross(v[i], v[(i + 1) % n], v[j], v[(j + 1) % n]):
                    raise GeometryError("polygon is not simple")
        edges = np.linalg.norm(np.roll(v, -1, axis=0) - v, axis=1)
        if np.min(edges) <= 0:
            raise GeometryError("repeated polygon vertex")
        if radius is None:
            radius = 0.1 * float(np.min(edges))
        if radius <= 0:
            raise GeometryError("rounding radius must be positive")
        self.radius = float(radius)
        self._build(v)
        c = self._centroid()
        self._build(v - c)

    def _build(self, v):
        n = len(v)
        r = self.radius
        self.vertices = v
        t_in, t_out, arcs = [], [], []
        for i in range(n):
            u_in = v[i] - v[i - 1]
            u_in = u_in / np.linalg.norm(u_in)
            u_out = v[(i + 1) % n] - v[i]
            u_out = u_out / np.linalg.norm(u_out)
            cr = u_in[0] * u_out[1] - u_in[1] * u_out[0]
            phi = math.atan2(cr, float(u_in @ u_out))
            d = r * math.tan(abs(phi) / 2.0)
            a = v[i] - d * u_in
            b = v[i] + d * u_out
            sign = 1.0 if phi >= 0 else -1.0
            center = a + sign * r * _left(u_in)
            a0 = math.atan2(a[1] - center[1], a[0] - center[0])
            t_in.append(a)
            t_out.append(b)
            arcs.append((center, a0, phi, d))
        for i in range(n):
            seg = np.linalg.norm(v[(i + 1) % n] - v[i])
            if arcs[i][3] + arcs[(i + 1) % n][3] > seg * (1 + 1e-12):
                raise GeometryError("rounding radius too large for polygon edge")
        pieces = []
        for i in range(n):
            center, a0, phi, _ = arcs[i]
            if abs(phi) > 0:
                pieces.append(("arc", center, a0, phi, r * abs(phi)))
            p0, p1 = t_out[i], t_in[(i + 1) % n]
            length = float(np.linalg.norm(p1 - p0))
            if length > 0:
                pieces.append(("line", p0, p1, None, length))
        self._pieces = pieces
        lengths = np.array([p[4] for p in pieces])
        self._starts = np.concatenate([[0.0], np.cumsum(lengths)])
        self._P = float(self._starts[-1])

    def _locate(self, t):
        s = np.mod(np.asarray(t, dtype=float), 1.0) * self._P
        idx = np.clip(np.searchsorted(self._starts, s, side="right") - 1, 0, len(self._pieces) - 1)
        return idx, s - self._starts[idx]

    def _eval(self, t, order):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        idx, ds = self._locate(t)
        out = np.zeros((len(t), 2))
        P = self._P
        for k, piece in enumerate(self._pieces):
            m = idx == k
            if not np.any(m):
                continue
            if piece[0] == "line":
                _, p0, p1, _, length = piece
                u = (p1 - p0) / length
                if order == 0:
                    out[m] = p0 + ds[m, None] * u
                elif order == 1:
                    out[m] = P * u
                else:
                    out[m] = 0.0
            else:
                _, center, a0, phi, length = piece
                sgn = 1.0 if phi > 0 else -1.0
                r = self.radius
                ang = a0 + sgn * ds[m] / r
                cs = np.column_stack([np.cos(ang), np.sin(ang)])
                if order == 0:
                    out[m] = center + r * cs
                elif order == 1:
                    out[m] = P * sgn * np.column_stack([-cs[:, 1], cs[:, 0]])
                else:
                    out[m] = -(P**2 / r) * cs
        return out

    def curve(self, t):
        return self._eval(t, 0)

    def d_curve(self, t):
        return self._eval(t, 1)

    def dd_curve(self, t):
        return self._eval(t, 2)

    def _centroid(self):
        g, w = np.polynomial.legendre.leggauss(24)
        area = 0.0
        mx = my = 0.0
        for k in range(len(self._pieces)):
            s = self._starts[k] + 0.5 * (g + 1.0) * self._pieces[k][4]
            t = s / self._P
            p = self.curve(t)
            dp = self.d_curve(t) / self._P
            ww = 0.5 * w * self._pieces[k][4]
            cross = p[:, 0] * dp[:, 1] - p[:, 1] * dp[:, 0]
            area += 0.5 * np.sum(ww * cross)
            mx += np.sum(ww * cross * p[:, 0]) / 3.0
            my += np.sum(ww * cross * p[:, 1]) / 3.0
        self._area = area
        return np.array([mx / area, my / area])

    @property
    def area(self) -> float:
        return float(self._area)

    @property
    def perimeter(self) -> float:
        return self._P

    def support(self, direction) -> float:
        d = np.asarray(direction, dtype=float)
        best = -np.inf
        ang_d = math.atan2(d[1], d[0])
        nd = float(np.linalg.norm(d))
        for piece in self._pieces:
            if piece[0] == "line":
                best = max(best, float(piece[1] @ d), float(piece[2] @ d))
                continue
            _, center, a0, phi, _ = piece
            r = self.radius
            for a in (a0, a0 + phi):
                best = max(best, float((center + r * np.array([math.cos(a), math.sin(a)])) @ d))
            lo, hi = (a0, a0 + phi) if phi > 0 else (a0 + phi, a0)
            rel = (ang_d - lo) % (2 * math.pi)
            if rel <= hi - lo:
                best = max(best, float(center @ d) + r * nd)
        return best

    def _piece_closest(self, points):
        """Exact nearest point per piece; returns (dist, param)."""
        best_d = np.full(len(points), np.inf)
        best_t = np.zeros(len(points))
        for k, piece in enumerate(self._pieces):
            s0 = self._starts[k]
            if piece[0] == "line":
                _, p0, p1, _, length = piece
                u = (p1 - p0) / length
                s = np.clip((points - p0) @ u, 0.0, length)
                q = p0 + s[:, None] * u
            else:
                _, center, a0, phi, length = piece
                r = self.radius
                sgn = 1.0 if phi > 0 else -1.0
                rel = points - center
                ang = np.arctan2(rel[:, 1], rel[:, 0])
                # arclength offset along the arc, wrapped into [0, 2*pi*r)
                s = np.mod(sgn * (ang - a0), 2 * np.pi) * r
                outside = s > length
                # pick the nearer endpoint when the projection falls outside the sweep
                e0 = center + r * np.array([math.cos(a0), math.sin(a0)])
                e1 = center + r * np.array([math.cos(a0 + phi), math.sin(a0 + phi)])
                d0 = np.linalg.norm(points - e0, axis=1)
                d1 = np.linalg.norm(points - e1, axis=1)
                s = np.where(outside, np.where(d0 <= d1, 0.0, length), s)
                a = a0 + sgn * s / r
                q = center + r * np.column_stack([np.cos(a), np.sin(a)])
            d = np.linalg.norm(points - q, axis=1)
            better = d < best_d
            best_d[better] = d[better]
            best_t[better] = (s0 + s[better]) / self._P
        return best_d, np.mod(best_t, 1.0)

    def closest_param(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return self._piece_closest(points)[1]

    def inside(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        t = np.linspace(0.0, 1.0, 4096, endpoint=False)
        poly = self.curve(t)
        x0, y0 = poly[:, 0][None, :], poly[:, 1][None, :]
        x1, y1 = np.roll(poly[:, 0], -1)[None, :], np.roll(poly[:, 1], -1)[None, :]
        inside = np.zeros(len(points), dtype=bool)
        # even-odd rule against a fine polyline; only used for the sign
        for lo in range(0, len(points), 1024):
            x = points[lo:lo + 1024, 0][:, None]
            y = points[lo:lo + 1024, 1][:, None]
            cond = (y0 > y) != (y1 > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xc = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            inside[lo:lo + 1024] = ((cond & (x < xc)).sum(axis=1) % 2) == 1
        # the polyline sign is unreliable within its chord error; use the normal there
        d, tt = self._piece_closest(points)
        close = d < 1e-6
        if np.any(close):
            q = self.curve(tt[close])
            nrm = self.outward_normal(tt[close])
            inside[close] = ((points[close] - q) * nrm).sum(axis=1) < 0
        return inside

    def unsigned_distance(self, points):
        return self._piece_closest(np.atleast_2d(np.asarray(points, dtype=float)))[0]

    def distance(self, points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        d, _ = self._piece_closest(points)
        return np.where(self.inside(points), -d, d)

    def __repr__(self):
        return f"SmoothedPolygon(n={len(self.vertices)}, radius={self.radius:g})"


@dataclass(frozen=True)
class Placement:
    """Vertical offset h and rotation theta (about the barycenter, applied first)."""

    h: float = 0.0
    theta: float = 0.0


@dataclass(frozen=True)
class Extents:
    delta_b: float
    delta_t: float
    tau: float


def body_extents(shape: BodyShape, theta: float = 0.0) -> Extents:
    """delta_b = -min x2, delta_t = max x2, tau = max |x1| over the rotated boundary."""
    if not shape.area > 0:
        raise GeometryError("degenerate shape (zero area)")
    R = rotation(theta)
    # max of (R c) . e = c . (R^T e)
    e1 = R.T @ np.array([1.0, 0.0])
    e2 = R.T @ np.array([0.0, 1.0])
    delta_t = shape.support(e2)
    delta_b = shape.support(-e2)
    tau = max(shape.support(e1), shape.support(-e1))
    return Extents(float(delta_b), float(delta_t), float(tau))


def gaps(channel: Channel, extents: Extents, h: float) -> tuple[float, float]:
    """(eps_b, eps_t) = (H - delta_b + h, H - delta_t - h); may be non-positive."""
    return channel.H - extents.delta_b + h, channel.H - extents.delta_t - h


def default_margin(channel: Channel, size: float | None = None) -> float:
    m = 0.02 * channel.H
    if size is not None:
        m = max(m, 2.0 * size)
    return m


def is_admissible(channel: Channel, shape: BodyShape, placement: Placement, margin: float = 0.0) -> bool:
    """True iff every boundary point of the placed body is farther than margin from the channel walls."""
    if margin < 0:
        raise GeometryError("margin must be non-negative")
    ext = body_extents(shape, placement.theta)
    eps_b, eps_t = gaps(channel, ext, placement.h)
    return bool(eps_b > margin and eps_t > margin and channel.Lrect - ext.tau > margin)


def placed_curve(shape: BodyShape, placement: Placement, t) -> np.ndarray:
    R = rotation(placement.theta)
    return shape.curve(t) @ R.T + np.array([0.0, placement.h])


def signed_distance(shape: BodyShape, placement: Placement, points) -> np.ndarray:
    """Signed distance to the placed body boundary, negative inside the body."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    R = rotation(placement.theta)
    local = (points - np.array([0.0, placement.h])) @ R
    return shape.distance(local)


def boundary_sample(shape: BodyShape, placement: Placement, n: int):
    """n ordered boundary points with body-outward unit normals and arclength weights.

    The weights are the periodic trapezoid rule in the curve parameter, so
    their sum converges to the perimeter spectrally for smooth shapes.
    """
    if n < 4:
        raise GeometryError("need at least 4 boundary samples")
    t = np.arange(n) / n
    R = rotation(placement.theta)
    pts = placed_curve(shape, placement, t)
    normals = shape.outward_normal(t) @ R.T
    weights = np.linalg.norm(shape.d_curve(t), axis=1) / n
    return pts, normals, weights


@dataclass(frozen=True)
class Geometry:
    """A channel together with the (unplaced) body shape."""

    channel: Channel
    shape: BodyShape

    def extents(self, theta: float = 0.0) -> Extents:
        return body_extents(self.shape, theta)

    def gaps(self, placement: Placement) -> tuple[float, float]:
        return gaps(self.channel, self.extents(placement.theta), placement.h)

    def h_range(self, theta: float = 0.0) -> tuple[float, float]:
        """Open interval of vertical offsets without contact."""
        ext = self.extents(theta)
        return -self.channel.H + ext.delta_b, self.channel.H - ext.delta_t

    def admissible(self, placement: Placement, margin: float = 0.0) -> bool:
        return is_admissible(self.channel, self.shape, placement, margin)

    @property
    def symmetric(self) -> bool:
        return self.shape.is_mirror_symmetric()
