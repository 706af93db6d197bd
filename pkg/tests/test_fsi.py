from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from channelfsi.extension import InflowProfile
from channelfsi.fsi import (
    EXPONENT_BOUNDS,
    NoSignChange,
    RestoringForce,
    bridge_sweep,
    continuation,
    default_tolerances,
    exponent_experiment,
    find_equilibrium,
    fit_slope,
    geometric_gaps,
    global_force,
    initial_bracket,
    monotonicity_scan,
    restoring_force,
    restoring_force_theta,
    safeguarded_root,
)
from channelfsi.geometry import Channel, Ellipse, Geometry, Placement, SmoothedPolygon
from channelfsi.lift import lift_volume
from channelfsi.mesh import MeshOptions
from channelfsi.ns_solver import FlowProblem, solve_navier_stokes

# delta_b = delta_t = 0.3 at theta = 0
REF_GEOM = Geometry(Channel(1.0, 2.0), Ellipse(0.5, 0.3))
GEOM = Geometry(Channel(1.0, 1.5), Ellipse(0.4, 0.2))
COARSE = MeshOptions(size=0.25)
HEXAGON = [(-0.45, 0.0), (-0.25, -0.12), (0.3, -0.14), (0.45, 0.02), (0.2, 0.13), (-0.3, 0.1)]


def model(U=1, gamma=5.0, K=0.1, geometry=REF_GEOM, **kw):
    return RestoringForce(gamma, K, K, U, geometry, **kw)


# ------------------------------------------------------------ restoring force


@pytest.mark.parametrize(
    "U,expected",
    # 30-digit mpmath evaluation of the closed form, frozen
    [(0, 1.1657213176535679234), (1, 1.6741761281491947455)],
)
def test_restoring_force_reference_values(U, expected):
    assert_allclose(restoring_force(model(U), 0.2), expected, rtol=1e-12)


@pytest.mark.parametrize("U", [0, 1])
def test_restoring_force_vanishes_at_centre(U):
    assert model(U)(0.0) == 0.0
    assert model(U, theta=0.2)(0.0) == 0.0


@pytest.mark.parametrize("U", [0, 1])
def test_difference_quotients_bounded_below_by_gamma(U, rng):
    m = model(U)
    lo, hi = m.h_range()
    a = rng.uniform(lo + 1e-3, hi - 1e-3, 1000)
    b = rng.uniform(lo + 1e-3, hi - 1e-3, 1000)
    keep = a != b
    q = (m(a[keep]) - m(b[keep])) / (a[keep] - b[keep])
    assert np.all(q >= m.gamma - 1e-9)


@pytest.mark.parametrize("eps", [1e-2, 1e-3])
@pytest.mark.parametrize("U", [0, 1])
def test_blow_up_calibration(eps, U):
    m = model(U, gamma=1.0, K=1.0)
    h_bottom = -1.0 + 0.3 + eps
    assert abs(m(h_bottom) * eps**1.5 / -m.K_b - 1.0) <= 0.01
    h_top = 1.0 - 0.3 - eps
    g = eps**-1.5 + (eps**-3.0 if U else 0.0)
    assert abs(m(h_top) / (m.K_t * g) - 1.0) <= 0.01


def test_restoring_force_errors():
    with pytest.raises(ValueError):
        model()(0.7)
    with pytest.raises(ValueError):
        model(gamma=0.0)
    with pytest.raises(ValueError):
        model(U=2)
    with pytest.raises(ValueError):
        model(c_theta=-1.0)


@given(st.floats(-0.3, 0.3), st.floats(-0.5, 0.5))
def test_theta_variant_pushes_towards_level(theta, h):
    m = model(c_theta=2.0)
    assert_allclose(restoring_force_theta(m, 0.0, theta), 2.0 * theta, atol=1e-15)
    base = m.base(h, theta)
    assert_allclose(restoring_force_theta(m, h, theta) - base, 2.0 * theta * (1 + h * h), rtol=1e-12, atol=1e-15)


def test_tolerances_and_bracket():
    m = model()
    assert default_tolerances(REF_GEOM, m) == (1e-4, 5e-8)
    h0, cap = initial_bracket(m)
    assert_allclose([h0, cap], [0.35, 0.68])


# ------------------------------------------------------------ root finder


def _wrap(f):
    calls = []

    def fn(x):
        calls.append(x)
        return f(x), 2.0 * x

    return fn, calls


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 5.0), st.floats(-0.9, 0.9), st.floats(0.0, 3.0))
def test_safeguarded_root_encloses_the_root(c, r, k):
    f = lambda x: c * (x - r) + k * (x - r) ** 3
    fn, _ = _wrap(f)
    x, (a, b), (fa, fb), aux, it, stop = safeguarded_root(fn, -1.0, 1.0, f(-1.0), f(1.0), 1e-8, 0.0)
    assert stop in ("bracket", "exact") or (stop == "phi" and f(x) == 0.0)
    assert fa <= 0 <= fb and a <= r <= b
    assert abs(x - r) <= 1e-8
    assert_allclose(aux, 2.0 * x, atol=1e-7)


def test_safeguarded_root_function_tolerance_stop():
    f = lambda x: x - 0.3
    fn, _ = _wrap(f)
    x, _, _, _, it, stop = safeguarded_root(fn, -1.0, 1.0, -1.3, 0.7, 1e-14, 1e-6)
    assert stop == "phi" and abs(x - 0.3) <= 1e-6


def test_odd_function_stops_at_midpoint():
    fn, calls = _wrap(lambda x: x**3 + x)
    x, _, _, _, it, stop = safeguarded_root(fn, -0.5, 0.5, -0.625, 0.625, 1e-4, 1e-12)
    assert x == 0.0 and it == 1 and stop == "phi"


def test_no_sign_change():
    fn, _ = _wrap(lambda x: x + 5)
    with pytest.raises(NoSignChange) as info:
        safeguarded_root(fn, -1.0, 1.0, 4.0, 6.0, 1e-6, 1e-9)
    assert (info.value.phi_a, info.value.phi_b) == (4.0, 6.0)


# ------------------------------------------------------------ global force and equilibria


@pytest.fixture(scope="module")
def problem():
    return FlowProblem(1.0, 0.05, InflowProfile.couette(1.0), GEOM, Placement(0.0, 0.25))


@pytest.fixture(scope="module")
def force():
    return RestoringForce(5.0, 0.1, 0.1, 1, GEOM, theta=0.25)


def test_zero_lambda_global_force_equals_restoring_force(problem, force):
    pb = problem.with_lambda(0.0)
    for h in (0.0, 0.3, -0.2):
        phi, lift, _ = global_force(pb, force, h, COARSE)
        assert phi == force(h) and lift == 0.0
    # the shortcut agrees with an actual solve
    pl = Placement(0.3, 0.25)
    fld = solve_navier_stokes(pb.with_placement(pl), COARSE.build(GEOM, pl))
    assert abs(lift_volume(fld)) <= 1e-14


def test_global_force_is_deterministic(problem, force):
    a = global_force(problem, force, 0.1, COARSE)
    b = global_force(problem, force, 0.1, COARSE)
    assert a[0] == b[0] and a[1] == b[1]
    assert a[0] == force(0.1) - a[1]


def test_zero_lambda_equilibrium_is_exactly_centred(problem, force):
    res = find_equilibrium(problem.with_lambda(0.0), force)
    assert res.h_star == 0.0 and res.stop == "exact"


def test_equilibrium_bracket_certificate(problem, force):
    res = find_equilibrium(problem, force, mesh_opts=COARSE)
    a, b = res.bracket
    fa, fb = res.phi_bracket
    assert fa < 0 < fb and a <= res.h_star <= b
    assert b - a <= 1e-4 or abs(res.phi_star) <= 5e-8
    assert not res.warnings
    with pytest.raises(NoSignChange):
        find_equilibrium(problem, force, bracket=(0.2, 0.3), mesh_opts=COARSE, expand=False)
    with pytest.raises(ValueError):
        find_equilibrium(problem, force, bracket=(0.3, 0.2), mesh_opts=COARSE)


def test_continuation_trivial_grid_and_validation(problem, force):
    res, rep = continuation(problem, force, [0.0], COARSE)
    assert [r.h_star for r in res] == [0.0] and rep["failure"] is None
    with pytest.raises(ValueError):
        continuation(problem, force, [0.1, 0.2])
    with pytest.raises(ValueError):
        continuation(problem, force, [0.0, 0.2, 0.1])


def test_zero_lambda_monotonicity_certificate(problem, force):
    rows, cert = monotonicity_scan(problem, force, 0.0, np.linspace(-0.3, 0.3, 7), COARSE)
    assert cert["increasing"] and cert["push_bottom"] and cert["push_top"]
    assert cert["min_increment"] >= 0.1 * force.gamma - 1e-12


def test_fit_slope_recovers_power_law():
    x = geometric_gaps(1.0, 6)
    assert_allclose(x, [0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625])
    s, c, r = fit_slope(x, -3.0 * x**-1.5)
    assert_allclose([s, c, r], [-1.5, math.log(3.0), 0.0], atol=1e-12)


def test_exponent_experiment_zero_lambda_and_errors(problem):
    fit = exponent_experiment(problem.with_lambda(0.0), "top")
    assert fit.passed and math.isnan(fit.slope) and fit.bound == EXPONENT_BOUNDS[("top", 1)]
    with pytest.raises(ValueError):
        exponent_experiment(problem, "left")
    with pytest.raises(ValueError):  # only three gaps
        exponent_experiment(problem, "bottom", [0.2, 0.1, 0.05], COARSE)


def test_bridge_sweep_matches_independent_runs():
    g = Geometry(Channel(1.0, 1.5), SmoothedPolygon(HEXAGON, 0.03))
    pb = FlowProblem(1.0, 0.05, InflowProfile.couette(1.0), g)
    m = RestoringForce(5.0, 0.1, 0.1, 1, g, c_theta=1.0)
    rows = bridge_sweep(pb, m, [0.0, 0.2, 0.9], 0.05, COARSE)
    assert [r["admissible"] for r in rows] == [True, True, False]
    for row in rows[:2]:
        th = row["theta"]
        ref = find_equilibrium(pb.with_placement(Placement(0.0, th)), m.with_theta(th), mesh_opts=COARSE)
        assert row["h_star"] == ref.h_star and row["error"] == ""
    # the coupling term pushes the rotated deck's offset relative to theta = 0
    assert rows[1]["h_star"] != rows[0]["h_star"]


def test_symmetric_continuation_is_flat_zero():
    prof = InflowProfile.polynomial(1.0, 1, [1.5, 0.0, -0.5], symmetric=True)
    pb = FlowProblem(1.0, 0.0, prof, GEOM, symmetric_mode=True)
    m = RestoringForce(5.0, 0.1, 0.1, 1, GEOM)
    res, rep = continuation(pb, m, [0.0, 0.02, 0.05], MeshOptions(size=0.25, symmetric=True))
    assert rep["failure"] is None and len(res) == 3
    assert max(abs(r.h_star) for r in res) <= 1e-4
