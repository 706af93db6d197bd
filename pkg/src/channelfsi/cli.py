"""Batch front end: JSON scenario in, CSV tables, certificates, SVG plots and a manifest out.

    channelfsi <experiment> CONFIG.json [--out DIR] [--jobs N] [--set key.path=value ...]
    channelfsi run CONFIG.json          # experiment taken from experiment.kind
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import logging
import math
import os
import sys

import jsonschema
import numpy as np

from . import fsi, lift, mesh as meshmod, ns_solver
from .extension import InflowProfile
from .geometry import Channel, Ellipse, Geometry, GeometryError, Placement, SmoothedPolygon
from .linsys import dump_matrix_market
from .mesh import MeshOptions
from .ns_solver import FlowProblem, SolverOptions
from .plotting import emit_plot

__all__ = [
    "ConfigError",
    "DEFAULTS",
    "SCHEMA",
    "EXPERIMENTS",
    "load_config",
    "resolve_config",
    "apply_override",
    "Scenario",
    "csv_text",
    "run_experiment",
    "run",
    "main",
]

log = logging.getLogger("channelfsi")

EXPERIMENTS = ("solve", "lift", "equilibrium", "continuation", "sweep-theta", "asymptotics", "symmetry", "mms", "mesh-dump")


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the offending key."""


DEFAULTS = {
    "channel": {"H": 1.0, "Lrect": 2.5},
    "fluid": {"mu": 1.0, "lambda": 0.05},
    "inflow": {"kind": "couette", "U": 1, "coef_in": None, "coef_out": None, "symmetric": False},
    "body": {"shape": {"kind": "ellipse", "a": 0.4, "b": 0.2}, "h": 0.0, "h_grid": None, "theta": 0.0, "theta_grid": None},
    "solver": {
        "size": 0.12,
        "grading": 0.3,
        "body_size": None,
        "layers": 3.0,
        "symmetric_mesh": False,
        "newton_tol": 1e-10,
        "picard_iters": 3,
        "max_newton": 25,
        "linear_solver": "bordered",
    },
    "force": {"gamma": 5.0, "K_b": 0.1, "K_t": 0.1, "c_theta": 0.0},
    "experiment": {
        "kind": None,
        "lambda_grid": [0.0, 0.01, 0.02, 0.04],
        "lambdas": [0.0, 0.01, 0.05],
        "bracket": None,
        "tol_h": None,
        "tol_phi": None,
        "side": "both",
        "gaps": None,
        "compare_cold": False,
        "mms_size": 0.35,
        "mms_refinements": 3,
        "discrepancy_tol": 0.02,
    },
    "output": {"directory": "out", "plots": True, "field_csv": True, "matrix_market": False},
    "seed": 0,
}

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_nullnum = {"type": ["number", "null"]}
_numlist = {"type": "array", "items": {"type": "number"}}
_nulllist = {"anyOf": [{"type": "null"}, {"type": "array", "items": {"type": "number"}, "minItems": 1}]}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "additionalProperties": False, "required": list(required)}


SCHEMA = _obj(
    {
        "channel": _obj({"H": _pos, "Lrect": _pos}),
        "fluid": _obj({"mu": _pos, "lambda": {"type": "number", "minimum": 0}}),
        "inflow": _obj(
            {
                "kind": {"enum": ["couette", "polynomial"]},
                "U": {"enum": [0, 1]},
                "coef_in": {"anyOf": [{"type": "null"}, _numlist]},
                "coef_out": {"anyOf": [{"type": "null"}, _numlist]},
                "symmetric": {"type": "boolean"},
            }
        ),
        "body": _obj(
            {
                "shape": {
                    "oneOf": [
                        _obj({"kind": {"const": "ellipse"}, "a": _pos, "b": _pos}, ("kind", "a", "b")),
                        _obj(
                            {
                                "kind": {"const": "smoothed-polygon"},
                                "vertices": {"type": "array", "minItems": 3, "items": {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}},
                                "radius": {"anyOf": [{"type": "null"}, _pos]},
                            },
                            ("kind", "vertices"),
                        ),
                    ]
                },
                "h": _num,
                "h_grid": _nulllist,
                "theta": _num,
                "theta_grid": _nulllist,
            }
        ),
        "solver": _obj(
            {
                "size": _pos,
                "grading": _pos,
                "body_size": {"anyOf": [{"type": "null"}, _pos]},
                "layers": _pos,
                "symmetric_mesh": {"type": "boolean"},
                "newton_tol": _pos,
                "picard_iters": {"type": "integer", "minimum": 0},
                "max_newton": {"type": "integer", "minimum": 1},
                "linear_solver": {"enum": ["bordered", "lu", "iterative"]},
            }
        ),
        "force": _obj({"gamma": _pos, "K_b": _pos, "K_t": _pos, "c_theta": {"type": "number", "minimum": 0}}),
        "experiment": _obj(
            {
                "kind": {"anyOf": [{"type": "null"}, {"enum": list(EXPERIMENTS)}]},
                "lambda_grid": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "lambdas": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 1},
                "bracket": {"anyOf": [{"type": "null"}, {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}]},
                "tol_h": {"anyOf": [{"type": "null"}, _pos]},
                "tol_phi": {"anyOf": [{"type": "null"}, _pos]},
                "side": {"enum": ["bottom", "top", "both"]},
                "gaps": {"anyOf": [{"type": "null"}, {"type": "array", "items": _pos, "minItems": 4}]},
                "compare_cold": {"type": "boolean"},
                "mms_size": _pos,
                "mms_refinements": {"type": "integer", "minimum": 1, "maximum": 4},
                "discrepancy_tol": _pos,
            }
        ),
        "output": _obj(
            {
                "directory": {"type": "string", "minLength": 1},
                "plots": {"type": "boolean"},
                "field_csv": {"type": "boolean"},
                "matrix_market": {"type": "boolean"},
            }
        ),
        "seed": {"type": "integer", "minimum": 0},
    }
)


# ------------------------------------------------------------------ config


def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in over.items():
        key = f"{path}.{k}" if path else k
        if isinstance(base, dict) and k in base and isinstance(base[k], dict) and k != "shape":
            if not isinstance(v, dict):
                raise ConfigError(f"{key}: expected an object")
            out[k] = _merge(base[k], v, key)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _key_of(err) -> str:
    path = ".".join(str(p) for p in err.absolute_path)
    return path or "<root>"


def resolve_config(raw: dict) -> dict:
    """Defaults merged under ``raw``, validated against the strict schema."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>: configuration must be a JSON object")
    cfg = _merge(DEFAULTS, raw)
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        if e.validator == "additionalProperties":
            raise ConfigError(f"{_key_of(e)}: {e.message}")
        raise ConfigError(f"{_key_of(e)}: {e.message}")
    _semantic_checks(cfg)
    return cfg


def _semantic_checks(cfg):
    ch = cfg["channel"]
    if not ch["Lrect"] > ch["H"]:
        raise ConfigError("channel.Lrect: must exceed channel.H")
    inf = cfg["inflow"]
    if inf["kind"] == "couette":
        if inf["symmetric"]:
            raise ConfigError("inflow.symmetric: couette profiles are not even; use kind 'polynomial'")
        if inf["U"] == 0:
            raise ConfigError("inflow.U: the couette profile with U = 0 is identically zero")
    elif inf["coef_in"] is None:
        raise ConfigError("inflow.coef_in: required for kind 'polynomial'")
    try:
        Scenario(cfg).profile
    except ValueError as exc:
        raise ConfigError(f"inflow: {exc}") from exc
    try:
        geom = Scenario(cfg).geometry
    except (GeometryError, ValueError) as exc:
        raise ConfigError(f"body.shape: {exc}") from exc
    b = cfg["body"]
    for h in b["h_grid"] or [b["h"]]:
        for th in b["theta_grid"] or [b["theta"]]:
            if not (-math.pi / 4 < th < math.pi / 4):
                raise ConfigError(f"body.theta: {th} outside (-pi/4, pi/4)")
            if not geom.admissible(Placement(h, th)):
                raise ConfigError(f"body.h: placement h={h}, theta={th} touches the channel walls")
    lg = cfg["experiment"]["lambda_grid"]
    if lg[0] != 0.0 or any(b <= a for a, b in zip(lg, lg[1:])):
        raise ConfigError("experiment.lambda_grid: must start at 0 and increase strictly")


def apply_override(cfg: dict, assignment: str) -> dict:
    """Set ``a.b.c=value`` (value parsed as JSON, else kept as a string)."""
    if "=" not in assignment:
        raise ConfigError(f"--set {assignment!r}: expected key.path=value")
    key, text = assignment.split("=", 1)
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = text
    parts = key.strip().split(".")
    node = cfg
    for p in parts[:-1]:
        if not isinstance(node.get(p), dict):
            raise ConfigError(f"{key}: unknown key")
        node = node[p]
    node[parts[-1]] = value
    return cfg


def load_config(path) -> dict:
    """Parse a JSON file; syntax errors report line and column."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


# ------------------------------------------------------------------ scenario


class Scenario:
    """Library objects built from a resolved configuration."""

    def __init__(self, cfg: dict):
        self.cfg = cfg

    @property
    def geometry(self) -> Geometry:
        ch = self.cfg["channel"]
        sh = self.cfg["body"]["shape"]
        if sh["kind"] == "ellipse":
            shape = Ellipse(sh["a"], sh["b"])
        else:
            shape = SmoothedPolygon(sh["vertices"], sh.get("radius"))
        return Geometry(Channel(ch["H"], ch["Lrect"]), shape)

    @property
    def profile(self) -> InflowProfile:
        inf = self.cfg["inflow"]
        H = self.cfg["channel"]["H"]
        if inf["kind"] == "couette":
            return InflowProfile.couette(H, inf["U"])
        return InflowProfile.polynomial(H, inf["U"], inf["coef_in"], inf["coef_out"], inf["symmetric"])

    @property
    def placement(self) -> Placement:
        b = self.cfg["body"]
        return Placement(float(b["h"]), float(b["theta"]))

    def problem(self, lam: float | None = None) -> FlowProblem:
        lam = self.cfg["fluid"]["lambda"] if lam is None else lam
        return FlowProblem(
            self.cfg["fluid"]["mu"],
            float(lam),
            self.profile,
            self.geometry,
            self.placement,
            symmetric_mode=self.cfg["inflow"]["symmetric"],
        )

    @property
    def mesh_options(self) -> MeshOptions:
        s = self.cfg["solver"]
        return MeshOptions(s["size"], s["grading"], s["body_size"], s["layers"], s["symmetric_mesh"])

    @property
    def solver_options(self) -> SolverOptions:
        s = self.cfg["solver"]
        return SolverOptions(s["picard_iters"], s["newton_tol"], s["max_newton"], 6, s["linear_solver"])

    def force(self, theta: float | None = None) -> fsi.RestoringForce:
        f = self.cfg["force"]
        theta = self.placement.theta if theta is None else theta
        return fsi.RestoringForce(f["gamma"], f["K_b"], f["K_t"], self.cfg["inflow"]["U"], self.geometry, theta, f["c_theta"])


# ------------------------------------------------------------------ output helpers


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(rows, columns) -> str:
    """CSV with header, '.' decimals (shortest round-trip floats) and '\\n' line ends."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


class _Result:
    def __init__(self):
        self.tables = {}  # file name -> (rows, columns)
        self.texts = {}  # file name -> text
        self.certs = []  # (name, passed)
        self.values = {}  # key -> value for the certificate block
        self.plots = []  # (file, rows, kind, x, y, title, slope)

    def cert(self, name, passed):
        self.certs.append((name, bool(passed)))


def _opt_tols(cfg, geom, model):
    th, tp = fsi.default_tolerances(geom, model)
    e = cfg["experiment"]
    return (th if e["tol_h"] is None else e["tol_h"]), (tp if e["tol_phi"] is None else e["tol_phi"])


# ------------------------------------------------------------------ experiments


def _exp_solve(sc: Scenario, jobs: int, res: _Result):
    pb = sc.problem()
    mesh = sc.mesh_options.build(sc.geometry, sc.placement)
    fld = ns_solver.solve_navier_stokes(pb, mesh, sc.solver_options)
    lr = lift.compute_lift(fld)
    res.values.update(
        dofs=mesh.n_velocity_dofs,
        residual=fld.report.residual,
        picard_iters=fld.report.picard_iters,
        newton_iters=fld.report.newton_iters,
        lift_boundary=lr.value_boundary,
        lift_volume=lr.value_volume,
        h1_norm=ns_solver.h1_norm(fld),
        multiplier=fld.multiplier,
    )
    res.cert("converged", fld.report.residual <= sc.solver_options.newton_tol)
    if sc.cfg["output"]["field_csv"]:
        res.texts["field.csv"] = ns_solver.field_csv(fld)
    if sc.cfg["output"]["matrix_market"]:
        d = ns_solver.discretization(mesh)
        J = d.matrix(pb.mu, d.convection(fld.u, newton=True))
        res.texts["jacobian.mtx"] = dump_matrix_market(J)
    return fld


def _exp_lift(sc: Scenario, jobs: int, res: _Result):
    b = sc.cfg["body"]
    grid = b["h_grid"] or [b["h"]]
    rows = lift.lift_curve(sc.problem(), grid, sc.mesh_options, sc.solver_options, jobs)
    cols = list(lift.LIFT_CURVE_COLUMNS) + ["relative", "error"]
    lam = sc.cfg["fluid"]["lambda"]
    tol = sc.cfg["experiment"]["discrepancy_tol"]
    ok = True
    for r in rows:
        if r["error"]:
            r["relative"] = math.nan
            ok = False
            continue
        lv, lb = r["lift_volume"], r["lift_boundary"]
        above = max(abs(lv), abs(lb)) > lift.noise_floor(lam)
        r["relative"] = lift.relative_discrepancy(lb, lv, lam) if above else 0.0
        ok &= r["relative"] <= tol
    res.tables["lift_curve.csv"] = (rows, cols)
    res.cert("all_rows_solved", all(not r["error"] for r in rows))
    res.cert("formula_equivalence", ok)
    if len(rows) > 1:
        res.plots.append(("lift_curve.svg", rows, "curve", "h", ["lift_boundary", "lift_volume"], "lift against offset", None))


def _exp_equilibrium(sc: Scenario, jobs: int, res: _Result):
    pb = sc.problem()
    model = sc.force()
    tol_h, tol_phi = _opt_tols(sc.cfg, sc.geometry, model)
    br = sc.cfg["experiment"]["bracket"]
    r = fsi.find_equilibrium(pb, model, br, tol_h, tol_phi, sc.mesh_options, sc.solver_options)
    rows = [{"h": h, "phi": phi, "lift": lf} for h, phi, lf in r.history]
    res.tables["equilibrium_history.csv"] = (rows, ["h", "phi", "lift"])
    res.values.update(
        lam=r.lam, h_star=r.h_star, bracket_a=r.bracket[0], bracket_b=r.bracket[1], phi_a=r.phi_bracket[0], phi_b=r.phi_bracket[1],
        lift=r.lift, iterations=r.iterations, stop=r.stop, warnings=len(r.warnings),
    )
    fa, fb = r.phi_bracket
    res.cert("sign_change", r.stop == "exact" or fa <= 0 <= fb or abs(r.phi_star) <= tol_phi)
    res.cert("converged", r.stop in ("exact", "phi", "bracket"))


def _exp_continuation(sc: Scenario, jobs: int, res: _Result):
    pb = sc.problem()
    model = sc.force()
    grid = sc.cfg["experiment"]["lambda_grid"]
    results, rep = fsi.continuation(pb, model, grid, sc.mesh_options, sc.solver_options)
    rows = [{"lam": r.lam, "h_star": r.h_star, "lift": r.lift, "iterations": r.iterations, "stop": r.stop} for r in results]
    cols = ["lam", "h_star", "lift", "iterations", "stop"]
    res.values.update(max_jump=rep["max_jump"], lipschitz_estimate=rep["lipschitz_estimate"], lambda_limit=rep["lambda_limit"])
    res.cert("complete", rep["failure"] is None)
    if sc.cfg["experiment"]["compare_cold"]:
        tol_h, _ = fsi.default_tolerances(sc.geometry, model)
        cold = fsi.cold_start_roots(pb, model, [r["lam"] for r in rows], sc.mesh_options, sc.solver_options, jobs)
        ok = True
        for r, c in zip(rows, cold):
            r["h_cold"] = c.h_star if isinstance(c, fsi.EquilibriumResult) else math.nan
            ok &= abs(r["h_cold"] - r["h_star"]) <= tol_h
        cols.append("h_cold")
        res.cert("warm_equals_cold", ok)
    res.tables["continuation.csv"] = (rows, cols)
    if len(rows) > 1:
        res.plots.append(("continuation.svg", rows, "curve", "lam", ["h_star"], "equilibrium offset", None))


def _exp_sweep_theta(sc: Scenario, jobs: int, res: _Result):
    grid = sc.cfg["body"]["theta_grid"]
    if not grid:
        raise ConfigError("body.theta_grid: required for sweep-theta")
    rows = fsi.bridge_sweep(sc.problem(), sc.force(0.0), grid, sc.cfg["fluid"]["lambda"], sc.mesh_options, sc.solver_options, jobs)
    cols = ["theta", "delta_b", "delta_t", "tau", "admissible", "h_star", "phi", "lift", "iterations", "error"]
    res.tables["theta_sweep.csv"] = (rows, cols)
    res.cert("admissible_rows_solved", all(not r["error"] for r in rows if r["admissible"]))
    good = [r for r in rows if r["admissible"] and not r["error"]]
    if len(good) > 1:
        res.plots.append(("theta_sweep.svg", good, "curve", "theta", ["h_star"], "equilibrium offset against rotation", None))


def _exp_asymptotics(sc: Scenario, jobs: int, res: _Result):
    side = sc.cfg["experiment"]["side"]
    sides = ("bottom", "top") if side == "both" else (side,)
    for s in sides:
        fit = fsi.exponent_experiment(sc.problem(), s, sc.cfg["experiment"]["gaps"], sc.mesh_options, sc.solver_options, jobs)
        rows = [{"gap": float(g), "lift": float(l), "abs_lift": abs(float(l))} for g, l in zip(fit.gaps, fit.lifts)]
        res.tables[f"exponent_{s}.csv"] = (rows, ["gap", "lift", "abs_lift"])
        res.values.update({f"slope_{s}": fit.slope, f"fit_residual_{s}": fit.residual, f"bound_{s}": fit.bound})
        res.cert(f"slope_bound_{s}", fit.passed)
        if rows and math.isfinite(fit.slope):
            res.plots.append((f"exponent_{s}.svg", rows, "loglog", "gap", ["abs_lift"], f"|lift| against gap ({s})", fit.slope))


def _exp_symmetry(sc: Scenario, jobs: int, res: _Result):
    model = sc.force(0.0)
    rows, ok = fsi.symmetry_certificate(sc.problem(), model, sc.cfg["experiment"]["lambdas"], sc.mesh_options, sc.solver_options)
    cols = ["lam", "lift_volume", "lift_boundary", "h_star", "defect_u1", "defect_u2", "defect_p", "lift_ok", "h_ok", "field_ok", "passed"]
    res.tables["symmetry.csv"] = (rows, cols)
    for r in rows:
        res.cert(f"symmetry_lam_{r['lam']!r}", r["passed"])


def _exp_mms(sc: Scenario, jobs: int, res: _Result):
    e = sc.cfg["experiment"]
    rows = ns_solver.mms_study(sc.geometry, sc.placement, e["mms_size"], e["mms_refinements"], sc.cfg["fluid"]["mu"], sc.solver_options)
    res.tables["mms.csv"] = (rows, list(ns_solver.MMS_COLUMNS))
    last = rows[-1]
    res.values.update(rate_u_H1=last["rate_u_H1"], rate_p_L2=last["rate_p_L2"], rate_u_L2=last["rate_u_L2"])
    rated = rows[1:]
    res.cert("velocity_h1_order", bool(rated) and all(abs(r["rate_u_H1"] - 2.0) <= 0.2 for r in rated))
    res.cert("pressure_l2_order", bool(rated) and all(abs(r["rate_p_L2"] - 2.0) <= 0.3 for r in rated))
    res.plots.append(("mms.svg", rows, "loglog", "dofs", ["u_H1", "p_L2"], "manufactured-solution errors", None))


def _exp_mesh_dump(sc: Scenario, jobs: int, res: _Result):
    m = sc.mesh_options.build(sc.geometry, sc.placement)
    res.texts["mesh.txt"] = meshmod.dump(m)
    q = meshmod.quality_report(m)
    res.values.update(min_angle=q["min_angle"], max_aspect=q["max_aspect"], vertices=q["vertices"], triangles=q["triangles"], velocity_dofs=q["velocity_dofs"])
    res.cert("positive_areas", bool(np.all(m.signed_areas() > 0)))
    res.cert("all_boundaries_tagged", all(q["boundary_edges"][t] > 0 for t in meshmod.TAGS))


_RUNNERS = {
    "solve": _exp_solve,
    "lift": _exp_lift,
    "equilibrium": _exp_equilibrium,
    "continuation": _exp_continuation,
    "sweep-theta": _exp_sweep_theta,
    "asymptotics": _exp_asymptotics,
    "symmetry": _exp_symmetry,
    "mms": _exp_mms,
    "mesh-dump": _exp_mesh_dump,
}


def run_experiment(cfg: dict, kind: str, jobs: int = 1) -> _Result:
    """Run one experiment on a resolved configuration (no files written)."""
    if kind not in _RUNNERS:
        raise ConfigError(f"experiment.kind: unknown experiment {kind!r}")
    res = _Result()
    _RUNNERS[kind](Scenario(cfg), jobs, res)
    return res


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write(path, text: str) -> bytes:
    data = text.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(data)
    return data


def certificate_text(kind: str, res: _Result, error: str = "") -> str:
    lines = [f"experiment: {kind}"]
    for k in sorted(res.values):
        lines.append(f"{k}: {_cell(res.values[k])}")
    for name, ok in res.certs:
        lines.append(f"{name}: {'PASS' if ok else 'FAIL'}")
    if error:
        lines.append(f"error: {error}")
    passed = not error and all(ok for _, ok in res.certs)
    lines.append(f"status: {'PASS' if passed else 'FAIL'}")
    return "\n".join(lines) + "\n"


def run(cfg: dict, kind: str | None = None, jobs: int = 1, outdir: str | None = None) -> int:
    """Run an experiment and write its artifacts; returns the process exit code."""
    kind = kind or cfg["experiment"]["kind"]
    if kind is None:
        raise ConfigError("experiment.kind: no experiment given (set it or use a subcommand)")
    cfg = copy.deepcopy(cfg)
    cfg["experiment"]["kind"] = kind
    outdir = outdir or cfg["output"]["directory"]
    os.makedirs(outdir, exist_ok=True)
    files = {}
    files["config.resolved.json"] = _write(os.path.join(outdir, "config.resolved.json"), json.dumps(cfg, indent=2, sort_keys=True) + "\n")
    error = ""
    try:
        res = run_experiment(cfg, kind, jobs)
    except ConfigError:
        raise
    except Exception as exc:  # recorded in the manifest, nonzero exit
        log.exception("experiment %s failed", kind)
        res = _Result()
        error = f"{type(exc).__name__}: {exc}"
    for name, (rows, cols) in res.tables.items():
        files[name] = _write(os.path.join(outdir, name), csv_text(rows, cols))
    for name, text in res.texts.items():
        files[name] = _write(os.path.join(outdir, name), text)
    if cfg["output"]["plots"]:
        for name, rows, pkind, x, y, title, slope in res.plots:
            try:
                files[name] = emit_plot(rows, pkind, os.path.join(outdir, name), x, y, title, slope).encode("utf-8")
            except ValueError as exc:
                log.warning("plot %s skipped: %s", name, exc)
    cert = certificate_text(kind, res, error)
    files["certificate.txt"] = _write(os.path.join(outdir, "certificate.txt"), cert)
    passed = cert.rstrip().endswith("status: PASS")
    manifest = {
        "experiment": kind,
        "status": "PASS" if passed else "FAIL",
        "error": error,
        "certificates": {name: ("PASS" if ok else "FAIL") for name, ok in res.certs},
        "files": [{"path": k, "sha256": _sha256(v), "bytes": len(v)} for k, v in sorted(files.items())],
    }
    _write(os.path.join(outdir, "manifest.json"), json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return 0 if passed else 1


# ------------------------------------------------------------------ entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="channelfsi", description="Steady channel flow past a body: lift, equilibria and certificates.")
    p.add_argument("experiment", choices=("run",) + EXPERIMENTS, help="experiment to run ('run' uses experiment.kind)")
    p.add_argument("config", help="JSON scenario file ('-' for defaults only)")
    p.add_argument("--out", help="output directory (overrides output.directory)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key, e.g. fluid.lambda=0.1")
    p.add_argument("--lambda", dest="lam", type=float, help="shorthand for fluid.lambda")
    p.add_argument("--h", type=float, help="shorthand for body.h")
    p.add_argument("--theta", type=float, help="shorthand for body.theta")
    p.add_argument("--size", type=float, help="shorthand for solver.size")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = {} if args.config == "-" else load_config(args.config)
        for key, val in (("fluid.lambda", args.lam), ("body.h", args.h), ("body.theta", args.theta), ("solver.size", args.size)):
            if val is not None:
                args.set.append(f"{key}={json.dumps(val)}")
        cfg = _merge(DEFAULTS, raw) if isinstance(raw, dict) else raw
        for s in args.set:
            apply_override(cfg, s)
        cfg = resolve_config(cfg)
        if args.jobs < 1:
            raise ConfigError("--jobs: must be at least 1")
        kind = None if args.experiment == "run" else args.experiment
        code = run(cfg, kind, args.jobs, args.out)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    out = args.out or cfg["output"]["directory"]
    with open(os.path.join(out, "certificate.txt"), encoding="utf-8") as fh:
        sys.stdout.write(fh.read())
    return code


if __name__ == "__main__":
    sys.exit(main())
