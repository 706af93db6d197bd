"""Closed-form divergence-free fields: the boundary-data extension s, the
lift test field w = curl(x1 chi), their cut-offs, and manufactured solutions.

Every vector field here is built as c * perp_grad(psi) with perp_grad(psi) =
(-d2 psi, d1 psi).  Values and gradients come from an exact second-order jet
of psi, and the divergence -c psi_12 + c psi_12 cancels bit-for-bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial

from .geometry import Extents, Geometry, GeometryError, Placement, body_extents, gaps

__all__ = [
    "ExtensionError",
    "Jet",
    "ScalarField",
    "AnalyticField",
    "InflowProfile",
    "smooth_step",
    "cutoff",
    "solenoidal_s",
    "symmetric_variant",
    "lift_field_w",
    "TrigStreamFunction",
    "mms_pair",
    "mms_forcing",
]


class ExtensionError(GeometryError):
    """Placement or profile unsuitable for the extension construction."""


def smooth_step(t):
    """Quintic S(t) = 10t^3 - 15t^4 + 6t^5 clamped to [0, 1]; returns (S, S', S'')."""
    t = np.clip(t, 0.0, 1.0)
    s = t**3 * (10.0 + t * (-15.0 + 6.0 * t))
    d1 = 30.0 * t**2 * (1.0 - t) ** 2
    d2 = 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t)
    return s, d1, d2


def _ramp(x, x0, x1):
    """0 for x <= x0, 1 for x >= x1, C^2 quintic in between (x1 > x0)."""
    w = x1 - x0
    s, d1, d2 = smooth_step((x - x0) / w)
    return s, d1 / w, d2 / w**2


class Jet:
    """Value, gradient (N, 2) and Hessian (N, 2, 2) of a scalar function."""

    __slots__ = ("v", "g", "H")

    def __init__(self, v, g, H):
        self.v, self.g, self.H = v, g, H

    @classmethod
    def const(cls, c, n):
        return cls(np.full(n, float(c)), np.zeros((n, 2)), np.zeros((n, 2, 2)))

    @classmethod
    def of_axis(cls, axis, f, df, ddf):
        n = len(f)
        g = np.zeros((n, 2))
        H = np.zeros((n, 2, 2))
        g[:, axis] = df
        H[:, axis, axis] = ddf
        return cls(np.asarray(f, dtype=float), g, H)

    def __add__(self, o):
        if not isinstance(o, Jet):
            return Jet(self.v + o, self.g, self.H)
        return Jet(self.v + o.v, self.g + o.g, self.H + o.H)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.v, -self.g, -self.H)

    def __sub__(self, o):
        return self + (-o)

    def __rsub__(self, o):
        return (-self) + o

    def __mul__(self, o):
        if not isinstance(o, Jet):
            return Jet(self.v * o, self.g * o, self.H * o)
        v = self.v * o.v
        g = self.v[:, None] * o.g + o.v[:, None] * self.g
        H = (
            self.v[:, None, None] * o.H
            + o.v[:, None, None] * self.H
            + self.g[:, :, None] * o.g[:, None, :]
            + o.g[:, :, None] * self.g[:, None, :]
        )
        return Jet(v, g, H)

    __rmul__ = __mul__

    def mirrored(self):
        """Jet of x -> f(x1, -x2) given the jet of f evaluated at (x1, -x2)."""
        g = self.g.copy()
        g[:, 1] *= -1.0
        H = self.H.copy()
        H[:, 0, 1] *= -1.0
        H[:, 1, 0] *= -1.0
        return Jet(self.v, g, H)


def _ramp_jet(points, axis, x0, x1):
    return Jet.of_axis(axis, *_ramp(points[:, axis], x0, x1))


Rect = tuple  # (x1_min, x1_max, x2_min, x2_max)


@dataclass(frozen=True)
class ScalarField:
    """Scalar field with exact gradient and Hessian; ``jet(points)`` returns a Jet."""

    jet: Callable[[np.ndarray], Jet]
    support: tuple = ()
    name: str = ""

    def __call__(self, points):
        return self.jet(np.atleast_2d(np.asarray(points, dtype=float))).v

    def gradient(self, points):
        return self.jet(np.atleast_2d(np.asarray(points, dtype=float))).g


@dataclass(frozen=True)
class AnalyticField:
    """Vector field with analytic first derivatives.

    ``evaluate(points)`` returns values (N, 2) and gradients (N, 2, 2) with
    ``grad[i, a, b] = d v_a / d x_b``.  ``support`` is a tuple of rectangles
    (x1_min, x1_max, x2_min, x2_max) outside of which the field vanishes;
    an empty tuple means "anywhere".
    """

    evaluate_fn: Callable
    support: tuple = ()
    name: str = ""
    laplacian_fn: Callable | None = None
    scale: float = math.inf  # shortest length over which the field varies

    def evaluate(self, points):
        return self.evaluate_fn(np.atleast_2d(np.asarray(points, dtype=float)))

    def __call__(self, points):
        return self.evaluate(points)[0]

    def gradient(self, points):
        return self.evaluate(points)[1]

    def divergence(self, points):
        g = self.gradient(points)
        return g[:, 0, 0] + g[:, 1, 1]

    def laplacian(self, points):
        if self.laplacian_fn is None:
            raise NotImplementedError(f"{self.name or 'field'} has no analytic Laplacian")
        return self.laplacian_fn(np.atleast_2d(np.asarray(points, dtype=float)))

    def in_support(self, points):
        points = np.atleast_2d(points)
        if not self.support:
            return np.ones(len(points), dtype=bool)
        m = np.zeros(len(points), dtype=bool)
        for x0, x1, y0, y1 in self.support:
            m |= (points[:, 0] >= x0) & (points[:, 0] <= x1) & (points[:, 1] >= y0) & (points[:, 1] <= y1)
        return m


def _curl_field(psi: Callable[[np.ndarray], Jet], c: float, support=(), name="") -> AnalyticField:
    def evaluate(points):
        J = psi(points)
        h12 = J.H[:, 0, 1]
        vals = c * np.column_stack([-J.g[:, 1], J.g[:, 0]])
        grads = np.empty((len(points), 2, 2))
        grads[:, 0, 0] = -c * h12
        grads[:, 0, 1] = -c * J.H[:, 1, 1]
        grads[:, 1, 0] = c * J.H[:, 0, 0]
        grads[:, 1, 1] = c * h12
        return vals, grads

    return AnalyticField(evaluate, tuple(support), name)


# ---------------------------------------------------------------- profiles


@dataclass(frozen=True)
class InflowProfile:
    """Inflow/outflow profiles V_in, V_out (polynomials in x2) and wall speed U.

    ``symmetric=False``: V(-H) = 0, V(H) = U.  ``symmetric=True``: V(+-H) = U
    with V even.  Equal flux through (-H, H) is required in both cases.
    """

    V_in: Polynomial
    V_out: Polynomial
    U: int
    H: float
    symmetric: bool = False

    def __post_init__(self):
        if self.U not in (0, 1):
            raise ExtensionError(f"U must be 0 or 1, got {self.U}")
        H = self.H
        scale = max(1.0, float(np.max(np.abs(self.V_in.coef))), float(np.max(np.abs(self.V_out.coef))))
        tol = 1e-10 * scale
        for name, V in (("V_in", self.V_in), ("V_out", self.V_out)):
            if abs(V(H) - self.U) > tol:
                raise ExtensionError(f"{name}(H) = {V(H)!r} != U = {self.U}")
            bottom = self.U if self.symmetric else 0.0
            if abs(V(-H) - bottom) > tol:
                raise ExtensionError(f"{name}(-H) = {V(-H)!r} != {bottom}")
            if self.symmetric:
                odd = V.coef[1::2]
                if np.any(np.abs(odd) > tol):
                    raise ExtensionError(f"{name} is not even in x2")
        fin, fout = self.flux()
        if abs(fin - fout) > tol * H:
            raise ExtensionError(f"flux mismatch: {fin!r} vs {fout!r}")

    @classmethod
    def couette(cls, H: float, U: int = 1) -> "InflowProfile":
        V = Polynomial([U / 2.0, U / (2.0 * H)])
        return cls(V, V, U, H)

    @classmethod
    def polynomial(cls, H: float, U: int, coef_in, coef_out=None, symmetric: bool = False) -> "InflowProfile":
        """Power-basis coefficients in x2 (lowest degree first)."""
        coef_out = coef_in if coef_out is None else coef_out
        return cls(Polynomial(coef_in), Polynomial(coef_out), U, H, symmetric)

    def flux(self):
        # Gauss-Legendre is exact for these polynomial degrees
        deg = max(self.V_in.degree(), self.V_out.degree())
        x, w = np.polynomial.legendre.leggauss(deg // 2 + 2)
        x = self.H * x
        w = self.H * w
        return float(w @ self.V_in(x)), float(w @ self.V_out(x))

    def potentials(self, base: str = "bottom"):
        """Antiderivatives of (V_in, V_out) anchored at x2 = -H ('bottom'),
        at x2 = H with reversed sign ('top', i.e. int_{x2}^{H} V), or at 0 ('center')."""
        if base == "bottom":
            return self.V_in.integ(lbnd=-self.H), self.V_out.integ(lbnd=-self.H)
        if base == "top":
            return -self.V_in.integ(lbnd=self.H), -self.V_out.integ(lbnd=self.H)
        if base == "center":
            return self.V_in.integ(lbnd=0.0), self.V_out.integ(lbnd=0.0)
        raise ValueError(base)


def _poly_jet(P: Polynomial, x2):
    return Jet.of_axis(1, P(x2), P.deriv()(x2), P.deriv(2)(x2))


# ---------------------------------------------------------------- cut-offs


def _check(geometry: Geometry, placement: Placement):
    ext = body_extents(geometry.shape, placement.theta)
    eps_b, eps_t = gaps(geometry.channel, ext, placement.h)
    if eps_b <= 0 or eps_t <= 0:
        raise ExtensionError(f"placement not admissible: eps_b={eps_b:.3g}, eps_t={eps_t:.3g}")
    if 2.0 * ext.tau >= geometry.channel.Lrect:
        raise ExtensionError("channel too short: need Lrect > 2 tau for the cut-off blocks")
    return ext, eps_b, eps_t


def _zeta_pair(points, H, tau, eps):
    """Cut-offs (zeta_l, zeta_r) with the blending band of width eps/2 under x2 = H.

    zeta_l: 1 on [-L,-2tau]x[-H,H], 0 on [tau,L]x[-H,H] and on
    [-tau,tau]x[-H,H-eps/2]; zeta_r: 1 on [2tau,L]x[-H,H], 0 on
    [-L,-tau]x[-H,H] and on [-tau,tau]x[-H,H-eps/2]; zeta_l + zeta_r = 1 on
    [-L,L]x[H-eps/4,H].
    """
    a, m, b = H - eps / 2.0, H - 3.0 * eps / 8.0, H - eps / 4.0
    z_l0 = 1.0 - _ramp_jet(points, 0, -2.0 * tau, -tau)
    z_r0 = _ramp_jet(points, 0, tau, 2.0 * tau)
    T = 1.0 - _ramp_jet(points, 0, -tau, tau)
    beta_l = _ramp_jet(points, 1, a, m)
    beta_r = _ramp_jet(points, 1, m, b)
    zeta_l = (1.0 - beta_l) * z_l0 + beta_l * T
    zeta_r = (1.0 - beta_r) * z_r0 + beta_r * (1.0 - T)
    return zeta_l, zeta_r


def _mirror_pair(points, H, tau, eps):
    q = points * np.array([1.0, -1.0])
    zl, zr = _zeta_pair(q, H, tau, eps)
    return zl.mirrored(), zr.mirrored()


def _split_pair(points, H, tau, eps_top, eps_bottom):
    """Top-banded pair for x2 >= 0, mirrored bottom-banded pair for x2 < 0."""
    zl_t, zr_t = _zeta_pair(points, H, tau, eps_top)
    zl_b, zr_b = _mirror_pair(points, H, tau, eps_bottom)
    low = points[:, 1] < 0

    def pick(top, bot):
        v = np.where(low, bot.v, top.v)
        g = np.where(low[:, None], bot.g, top.g)
        Hh = np.where(low[:, None, None], bot.H, top.H)
        return Jet(v, g, Hh)

    return pick(zl_t, zl_b), pick(zr_t, zr_b)


def _construction(U: int, h: float, geometry: Geometry, placement: Placement):
    """(mode, band) for the standard extension.

    U = 1 follows the top gap; U = 0 uses the fixed band eps_t(0) for h <= 0 and
    the reflected bottom construction with band eps_b(0) for h > 0.
    """
    ext, eps_b, eps_t = _check(geometry, placement)
    H = geometry.channel.H
    if U == 1:
        return "top", eps_t, ext
    if h <= 0.0:
        return "top", H - ext.delta_t, ext
    return "bottom", H - ext.delta_b, ext


def _chi_jet(points, ext: Extents, h, eps_b, eps_t, collar):
    # reversed ramp bounds give the decreasing collars below the body and left of it
    tau = ext.tau
    X = (1.0 - _ramp_jet(points, 0, tau, 2.0 * tau)) * (1.0 - _ramp_jet(points, 0, -tau, -2.0 * tau))
    top = h + ext.delta_t
    bot = h - ext.delta_b
    Y = (1.0 - _ramp_jet(points, 1, top, top + collar * eps_t)) * (
        1.0 - _ramp_jet(points, 1, bot, bot - collar * eps_b)
    )
    return X * Y


def cutoff(kind: str, geometry: Geometry, placement: Placement, U: int = 1, collar: float = 0.5) -> ScalarField:
    """Scalar cut-off used by the constructions: 'zeta_l', 'zeta_r' or 'chi'.

    For zeta the band follows the same U/h rule as :func:`solenoidal_s`; chi
    is 1 on the body box [-tau,tau]x[h-delta_b,h+delta_t] and 0 outside
    [-2tau,2tau]x[h-delta_b-c eps_b, h+delta_t+c eps_t] with collar fraction c.
    """
    H, L = geometry.channel.H, geometry.channel.Lrect
    if kind == "chi":
        if not 0.0 < collar <= 0.5:
            raise ExtensionError("collar fraction must lie in (0, 1/2]")
        ext, eps_b, eps_t = _check(geometry, placement)
        h = placement.h
        sup = ((-2 * ext.tau, 2 * ext.tau, h - ext.delta_b - collar * eps_b, h + ext.delta_t + collar * eps_t),)
        return ScalarField(lambda p: _chi_jet(p, ext, h, eps_b, eps_t, collar), sup, "chi")
    if kind not in ("zeta_l", "zeta_r"):
        raise ValueError(f"unknown cut-off kind {kind!r}")
    mode, band, ext = _construction(U, placement.h, geometry, placement)
    idx = 0 if kind == "zeta_l" else 1
    if mode == "top":
        fn = lambda p: _zeta_pair(p, H, ext.tau, band)[idx]
    else:
        fn = lambda p: _mirror_pair(p, H, ext.tau, band)[idx]
    sup = ((-L, -ext.tau if idx else ext.tau, -H, H),) if idx == 0 else ((-ext.tau, L, -H, H),)
    return ScalarField(fn, sup, kind)


def _s_support(L, H, tau, band, mode):
    if mode == "top":
        mid = (-tau, tau, H - band / 2.0, H)
    elif mode == "bottom":
        mid = (-tau, tau, -H, -H + band / 2.0)
    else:
        mid = None
    rects = [(-L, -tau, -H, H), (tau, L, -H, H)]
    if mid is not None:
        rects.append(mid)
    return tuple(rects)


def solenoidal_s(profile: InflowProfile, geometry: Geometry, placement: Placement, lam: float) -> AnalyticField:
    """Divergence-free extension of the boundary data: lam*V_in e1 on the left,
    lam*V_out e1 on the right, lam*U e1 on top, 0 on the bottom wall and the body."""
    if profile.symmetric:
        raise ExtensionError("symmetric profiles use symmetric_variant")
    H, L = geometry.channel.H, geometry.channel.Lrect
    if abs(profile.H - H) > 1e-14 * H:
        raise ExtensionError("profile and channel disagree on H")
    mode, band, ext = _construction(profile.U, placement.h, geometry, placement)
    tau = ext.tau
    if mode == "top":
        P_in, P_out = profile.potentials("bottom")

        def psi(p):
            zl, zr = _zeta_pair(p, H, tau, band)
            return zl * _poly_jet(P_in, p[:, 1]) + zr * _poly_jet(P_out, p[:, 1])

        c = -lam
    else:
        P_in, P_out = profile.potentials("top")

        def psi(p):
            zl, zr = _mirror_pair(p, H, tau, band)
            return zl * _poly_jet(P_in, p[:, 1]) + zr * _poly_jet(P_out, p[:, 1])

        c = lam
    return _curl_field(psi, c, _s_support(L, H, tau, band, mode), f"s[{mode}]")


def symmetric_variant(profile: InflowProfile, geometry: Geometry, lam: float = 1.0, placement: Placement | None = None) -> AnalyticField:
    """Extension for the symmetric data lam*U e1 on both walls and even profiles.

    The upper half uses the top-banded cut-offs with band eps_t, the lower half
    their mirror image with band eps_b; the stream function is anchored at
    x2 = 0 so that it is odd in x2 and both walls carry the same flux value.
    """
    if not profile.symmetric:
        raise ExtensionError("symmetric_variant needs an even, symmetric profile")
    placement = placement or Placement()
    H, L = geometry.channel.H, geometry.channel.Lrect
    ext, eps_b, eps_t = _check(geometry, placement)
    P_in, P_out = profile.potentials("center")

    def psi(p):
        zl, zr = _split_pair(p, H, ext.tau, eps_t, eps_b)
        return zl * _poly_jet(P_in, p[:, 1]) + zr * _poly_jet(P_out, p[:, 1])

    sup = (
        (-L, -ext.tau, -H, H),
        (ext.tau, L, -H, H),
        (-ext.tau, ext.tau, H - eps_t / 2.0, H),
        (-ext.tau, ext.tau, -H, -H + eps_b / 2.0),
    )
    return _curl_field(psi, -lam, sup, "s[symmetric]")


def lift_field_w(geometry: Geometry, placement: Placement, collar: float = 0.5) -> AnalyticField:
    """w = perp_grad(x1 chi): e2 on the body, 0 on the channel walls, divergence free."""
    chi = cutoff("chi", geometry, placement, collar=collar)
    ext, eps_b, eps_t = _check(geometry, placement)

    def psi(p):
        x1 = Jet(p[:, 0].copy(), np.tile([1.0, 0.0], (len(p), 1)), np.zeros((len(p), 2, 2)))
        return x1 * chi.jet(p)

    w = _curl_field(psi, 1.0, chi.support, f"w[collar={collar:g}]")
    return replace(w, scale=min(collar * eps_b, collar * eps_t, ext.tau))


# ------------------------------------------------- manufactured solutions


@dataclass(frozen=True)
class TrigStreamFunction:
    """psi = A sin(a x1 + p1) sin(b x2 + p2) with closed-form derivatives of any order."""

    A: float = 1.0
    a: float = 1.0
    b: float = 1.0
    p1: float = 0.0
    p2: float = 0.0

    def d(self, i: int, j: int, points):
        x1, x2 = points[:, 0], points[:, 1]
        return (
            self.A
            * self.a**i
            * self.b**j
            * np.sin(self.a * x1 + self.p1 + i * math.pi / 2)
            * np.sin(self.b * x2 + self.p2 + j * math.pi / 2)
        )

    def velocity(self) -> AnalyticField:
        def evaluate(p):
            d = self.d
            vals = np.column_stack([-d(0, 1, p), d(1, 0, p)])
            g = np.empty((len(p), 2, 2))
            h12 = d(1, 1, p)
            g[:, 0, 0] = -h12
            g[:, 0, 1] = -d(0, 2, p)
            g[:, 1, 0] = d(2, 0, p)
            g[:, 1, 1] = h12
            return vals, g

        def lap(p):
            d = self.d
            return np.column_stack([-(d(2, 1, p) + d(0, 3, p)), d(3, 0, p) + d(1, 2, p)])

        return AnalyticField(evaluate, (), "mms-velocity", lap)


@dataclass(frozen=True)
class TrigPressure:
    """p = B cos(c x1) sin(d x2)."""

    B: float = 1.0
    c: float = 1.0
    d: float = 1.0

    def field(self) -> ScalarField:
        def jet(p):
            x1, x2 = p[:, 0], p[:, 1]
            cx, sx = np.cos(self.c * x1), np.sin(self.c * x1)
            cy, sy = np.cos(self.d * x2), np.sin(self.d * x2)
            v = self.B * cx * sy
            g = self.B * np.column_stack([-self.c * sx * sy, self.d * cx * cy])
            H = np.empty((len(p), 2, 2))
            H[:, 0, 0] = -self.B * self.c**2 * cx * sy
            H[:, 1, 1] = -self.B * self.d**2 * cx * sy
            H[:, 0, 1] = H[:, 1, 0] = -self.B * self.c * self.d * sx * cy
            return Jet(v, g, H)

        return ScalarField(jet, (), "mms-pressure")


def mms_pair(H: float = 1.0):
    """A smooth solenoidal velocity and a pressure used for convergence studies."""
    k = math.pi / (2.0 * H)
    psi = TrigStreamFunction(A=0.5 / k, a=k, b=k, p1=0.3, p2=0.2)
    return psi.velocity(), TrigPressure(B=1.0, c=1.1, d=0.9).field()


def mms_forcing(exact_u: AnalyticField, exact_p: ScalarField | None, mu: float) -> AnalyticField:
    """f = -mu Lap u + (grad u) u + grad p, returned as a field with values only
    (its gradient slot is filled with zeros and must not be used)."""

    def evaluate(points):
        u, g = exact_u.evaluate(points)
        f = -mu * exact_u.laplacian(points) + np.einsum("nab,nb->na", g, u)
        if exact_p is not None:
            f = f + exact_p.gradient(points)
        return f, np.zeros((len(points), 2, 2))

    return AnalyticField(evaluate, (), "mms-forcing")
