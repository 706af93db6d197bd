"""End-to-end acceptance criteria, one test each; every test prints a PASS/FAIL line."""

from __future__ import annotations

import json

import numpy as np
import pytest

from channelfsi import cli
from channelfsi.extension import InflowProfile, lift_field_w, solenoidal_s, symmetric_variant
from channelfsi.fsi import (
    RestoringForce,
    cold_start_roots,
    continuation,
    default_tolerances,
    exponent_experiment,
    find_equilibrium,
    global_force,
    initial_bracket,
    monotonicity_scan,
    symmetry_certificate,
)
from channelfsi.geometry import Channel, Ellipse, Geometry, Placement, boundary_sample
from channelfsi.lift import lift_boundary, lift_curve, lift_volume, relative_discrepancy
from channelfsi.mesh import MeshOptions, refine_uniform
from channelfsi.ns_solver import (
    FlowProblem,
    field_csv,
    h1_norm,
    mms_study,
    solve_navier_stokes,
    solve_stokes,
    uniqueness_probe,
)

GEOM = Geometry(Channel(1.0, 2.5), Ellipse(0.4, 0.2))
THETA = 0.3  # tilted ellipse: the lift does not vanish by symmetry
COUETTE = InflowProfile.couette(1.0)
POISEUILLE = InflowProfile.polynomial(1.0, 0, [0.75, 0.0, -0.75])
SYMMETRIC = InflowProfile.polynomial(1.0, 1, [1.5, 0.0, -0.5], symmetric=True)
LAM = 0.05
DISCREPANCY_TOL = 0.02


@pytest.fixture
def report(capsys):
    def emit(n, name, passed, detail=""):
        with capsys.disabled():
            print(f"\ncriterion {n:2d} ({name}): {'PASS' if passed else 'FAIL'}  {detail}")
        assert passed, f"criterion {n} ({name}) failed: {detail}"

    return emit


@pytest.fixture(scope="module")
def asym():
    return FlowProblem(1.0, LAM, COUETTE, GEOM, Placement(0.0, THETA))


@pytest.fixture(scope="module")
def model():
    return RestoringForce(5.0, 0.1, 0.1, 1, GEOM, theta=THETA)


@pytest.fixture(scope="module")
def asym_mesh():
    return MeshOptions().build(GEOM, Placement(0.0, THETA))


@pytest.fixture(scope="module")
def asym_field(asym, asym_mesh):
    return solve_navier_stokes(asym, asym_mesh)


def _wall_samples(n):
    t = np.linspace(-1, 1, n)
    H, L = 1.0, 2.5
    return {
        "left": np.column_stack([np.full(n, -L), H * t]),
        "right": np.column_stack([np.full(n, L), H * t]),
        "top": np.column_stack([L * t, np.full(n, H)]),
        "bottom": np.column_stack([L * t, np.full(n, -H)]),
    }


def test_01_extension_exactness(report):
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(-2.5, 2.5, 10000), rng.uniform(-1, 1, 10000)])
    walls = _wall_samples(200)
    div, trace = 0.0, 0.0
    cases = [
        (COUETTE, Placement(0.0, THETA)),
        (POISEUILLE, Placement(-0.3, THETA)),
        (POISEUILLE, Placement(0.3, THETA)),
    ]
    for prof, pl in cases:
        lam = 0.7
        s = solenoidal_s(prof, GEOM, pl, lam)
        w = lift_field_w(GEOM, pl)
        div = max(div, np.max(np.abs(s.divergence(pts))), np.max(np.abs(w.divergence(pts))))
        body, _, _ = boundary_sample(GEOM.shape, pl, 200)
        y = walls["left"][:, 1]
        expect_s = {
            "left": np.column_stack([lam * prof.V_in(y), 0 * y]),
            "right": np.column_stack([lam * prof.V_out(y), 0 * y]),
            "top": np.tile([lam * prof.U, 0.0], (200, 1)),
            "bottom": np.zeros((200, 2)),
        }
        for k, p in walls.items():
            trace = max(trace, np.max(np.abs(s(p) - expect_s[k])), np.max(np.abs(w(p))))
        trace = max(trace, np.max(np.abs(s(body))), np.max(np.abs(w(body) - [0.0, 1.0])))
    s = symmetric_variant(SYMMETRIC, GEOM, 0.7)
    div = max(div, np.max(np.abs(s.divergence(pts))))
    for k in ("top", "bottom"):
        trace = max(trace, np.max(np.abs(s(walls[k]) - [0.7, 0.0])))
    report(1, "extension exactness", div <= 1e-10 and trace <= 1e-10, f"max|div|={div:.2e} max trace error={trace:.2e}")


def test_02_manufactured_solution_orders(report):
    rows = mms_study(Geometry(Channel(1.0, 1.5), Ellipse(0.3, 0.3)), size=0.35, refinements=3)
    ru = [r["rate_u_H1"] for r in rows[1:]]
    rp = [r["rate_p_L2"] for r in rows[1:]]
    ok = len(ru) == 3 and all(abs(r - 2.0) <= 0.2 for r in ru) and all(abs(r - 2.0) <= 0.3 for r in rp)
    ok &= rows[-1]["dofs"] <= 60000
    report(2, "MMS convergence", ok, f"H1 rates={np.round(ru, 3).tolist()} p rates={np.round(rp, 3).tolist()} dofs={rows[-1]['dofs']}")


def test_03_zero_lambda(report, asym, model, asym_mesh):
    pb = asym.with_lambda(0.0)
    fld = solve_navier_stokes(pb, asym_mesh)
    norm = h1_norm(fld)
    lb, lv = lift_boundary(fld), lift_volume(fld)
    eq = find_equilibrium(pb, model)
    ok = norm <= 1e-11 and lb == 0.0 and lv == 0.0 and eq.h_star == 0.0
    report(3, "zero data", ok, f"|u|_H1={norm:.1e} lifts=({lb:.1e}, {lv:.1e}) h*={eq.h_star}")


def test_04_lift_formula_equivalence(report, asym, asym_mesh, asym_field):
    coarse = relative_discrepancy(lift_boundary(asym_field), lift_volume(asym_field), LAM)
    fine_field = solve_navier_stokes(asym, refine_uniform(asym_mesh))
    fine = relative_discrepancy(lift_boundary(fine_field), lift_volume(fine_field), LAM)
    ok = coarse <= DISCREPANCY_TOL and fine < coarse and fine_field.mesh.n_velocity_dofs <= 60000
    report(4, "boundary vs volume lift", ok, f"relative discrepancy {coarse:.2e} -> {fine:.2e} (dofs {fine_field.mesh.n_velocity_dofs})")


def test_05_test_field_independence(report, asym_field):
    pl = Placement(0.0, THETA)
    a = lift_volume(asym_field, lift_field_w(GEOM, pl, 0.5))
    b = lift_volume(asym_field, lift_field_w(GEOM, pl, 0.25))
    rel = relative_discrepancy(a, b, LAM)
    report(5, "w-independence", rel <= DISCREPANCY_TOL, f"collar 1/2: {a:.10g}, collar 1/4: {b:.10g}, relative {rel:.1e}")


def test_06_symmetry(report):
    pb = FlowProblem(1.0, 0.0, SYMMETRIC, GEOM, Placement(), symmetric_mode=True)
    m = RestoringForce(5.0, 0.1, 0.1, 1, GEOM)
    rows, passed = symmetry_certificate(pb, m, (0.0, 0.01, 0.05))
    worst_lift = max(abs(r["lift_volume"]) / (1 + r["lam"]) for r in rows)
    worst_h = max(abs(r["h_star"]) for r in rows)
    worst_d = max(max(r["defect_u1"], r["defect_u2"], r["defect_p"]) for r in rows)
    ok = passed and worst_lift <= 1e-8 and worst_h <= default_tolerances(GEOM, m)[0] and worst_d <= 1e-9
    report(6, "symmetry", ok, f"max|lift|/(1+lam)={worst_lift:.1e} max|h*|={worst_h:.1e} max defect={worst_d:.1e}")


def test_07_monotonicity_and_push(report, asym, model):
    h0, cap = initial_bracket(model)
    grid = np.linspace(-h0, h0, 11)
    rows, cert = monotonicity_scan(asym, model, LAM, grid)
    near_bottom = global_force(asym, model, -cap)[0]
    near_top = global_force(asym, model, cap)[0]
    ok = cert["increasing"] and cert["push_bottom"] and cert["push_top"] and near_bottom < 0 < near_top
    report(7, "monotone phi", ok, f"min increment={cert['min_increment']:.3e} phi(-cap)={near_bottom:.3e} phi(cap)={near_top:.3e}")


def test_08_equilibrium_oracles(report, asym, model):
    eq = find_equilibrium(asym, model)
    scan = np.linspace(-0.1, 0.1, 20)
    phis = np.array([global_force(asym, model, h)[0] for h in scan])
    h_scan = scan[np.argmin(np.abs(phis))]
    cell = scan[1] - scan[0]
    scan_ok = abs(eq.h_star - h_scan) <= cell
    tol_h, _ = default_tolerances(GEOM, model)
    grid = [0.0, 0.025, LAM]
    warm, rep = continuation(asym, model, grid)
    cold = cold_start_roots(asym, model, grid[:-1]) + [eq]
    gaps = [abs(w.h_star - c.h_star) for w, c in zip(warm, cold)]
    cont_ok = rep["failure"] is None and len(warm) == len(grid) and max(gaps) <= tol_h
    report(8, "equilibrium oracles", scan_ok and cont_ok, f"h*={eq.h_star:.6f} scan argmin={h_scan:.6f} (cell {cell:.4f}) warm-cold max={max(gaps):.1e}")


def test_09_blow_up_exponents(report):
    couette = FlowProblem(1.0, LAM, COUETTE, GEOM)
    poiseuille = FlowProblem(1.0, LAM, POISEUILLE, GEOM)
    fits = [
        exponent_experiment(couette, "bottom"),
        exponent_experiment(couette, "top"),
        exponent_experiment(poiseuille, "top"),
    ]
    limits = [-1.75, -3.25, -1.75]
    ok = all(len(f.gaps) >= 4 and f.decades >= 1.0 and f.slope >= lim for f, lim in zip(fits, limits))
    detail = " ".join(f"{f.side}/U={f.U}: {f.slope:.3f}>={lim}" for f, lim in zip(fits, limits))
    report(9, "lift blow-up rates", ok, detail)


def test_10_small_lambda_linearity(report, asym, asym_mesh):
    lams = np.array([1e-3, 2e-3, 4e-3])
    norms = np.array([h1_norm(solve_navier_stokes(asym.with_lambda(l), asym_mesh)) for l in lams])
    c = float(lams @ norms / (lams @ lams))
    dev = float(np.max(np.abs(norms - c * lams) / (c * lams)))
    a = solve_stokes(asym.with_lambda(1e-3), asym_mesh)
    b = solve_stokes(asym.with_lambda(4e-3), asym_mesh)
    lin = float(np.max(np.abs(b.x - 4 * a.x)) / np.max(np.abs(b.x)))
    report(10, "linear regime", dev <= 0.05 and lin <= 1e-10, f"max deviation from c*lam={dev:.2e} Stokes nonlinearity={lin:.1e}")


def test_11_uniqueness(report, asym_mesh):
    sym_mesh = MeshOptions(symmetric=True).build(GEOM, Placement())
    flat_mesh = MeshOptions().build(GEOM, Placement())
    cases = [
        (FlowProblem(1.0, 0.01, COUETTE, GEOM, Placement(0.0, THETA)), asym_mesh),
        (FlowProblem(1.0, 0.01, SYMMETRIC, GEOM, Placement(), symmetric_mode=True), sym_mesh),
        (FlowProblem(1.0, 0.01, POISEUILLE, GEOM, Placement()), flat_mesh),
    ]
    dists = [uniqueness_probe(pb, m, n_starts=3, seed=11)[0] for pb, m in cases]
    report(11, "uniqueness", max(dists) <= 1e-8, f"max pairwise H1 distance per scenario={[f'{d:.1e}' for d in dists]}")


def test_12_determinism_and_cli_parity(report, tmp_path, asym):
    cfg = {"body": {"theta": THETA, "h_grid": [-0.1, 0.1]}, "fluid": {"lambda": LAM}}
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(cfg))
    codes, manifests = [], []
    for name in ("a", "b"):
        out = tmp_path / name
        codes.append(cli.main(["lift", str(path), "--out", str(out)]))
        codes.append(cli.main(["solve", str(path), "--out", str(out / "solve")]))
        manifests.append(((out / "manifest.json").read_text(), (out / "solve" / "manifest.json").read_text()))
    same = manifests[0] == manifests[1]
    rows = lift_curve(asym, [-0.1, 0.1], MeshOptions())
    cols = ["h", "lift_boundary", "lift_volume"]
    lib = cli.csv_text(rows, cols)
    text = (tmp_path / "a" / "lift_curve.csv").read_text().splitlines()
    head = text[0].split(",")
    idx = [head.index(c) for c in cols]
    from_cli = "\n".join([",".join(cols)] + [",".join(line.split(",")[i] for i in idx) for line in text[1:]]) + "\n"
    fld = solve_navier_stokes(asym, MeshOptions().build(GEOM, Placement(0.0, THETA)))
    field_same = (tmp_path / "a" / "solve" / "field.csv").read_text() == field_csv(fld)
    ok = codes == [0, 0, 0, 0] and same and from_cli == lib and field_same
    report(12, "determinism and CLI parity", ok, f"exit codes={codes} manifests identical={same} lift csv equal={from_cli == lib} field csv equal={field_same}")
