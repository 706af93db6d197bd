from __future__ import annotations

import json

import pytest

from channelfsi import cli
from channelfsi.cli import ConfigError, apply_override, csv_text, load_config, main, resolve_config
from channelfsi.lift import LIFT_CURVE_COLUMNS, lift_curve
from channelfsi.mesh import dump

SMALL = {"channel": {"Lrect": 1.5}, "solver": {"size": 0.25}}


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_defaults_resolve():
    cfg = resolve_config({})
    assert cfg["solver"]["size"] == 0.12
    assert cfg["fluid"]["lambda"] == 0.05


@pytest.mark.parametrize(
    "raw,key",
    [
        ({"fluid": {"viscosity": 1.0}}, "fluid"),
        ({"fluid": {"mu": -1.0}}, "fluid.mu"),
        ({"solver": {"size": "big"}}, "solver.size"),
        ({"channel": {"H": 1.0, "Lrect": 0.5}}, "channel.Lrect"),
        ({"inflow": {"kind": "polynomial"}}, "inflow.coef_in"),
        ({"inflow": {"U": 0}}, "inflow.U"),
        ({"inflow": {"kind": "polynomial", "U": 1, "coef_in": [1.0]}}, "inflow"),
        ({"body": {"theta": 1.0}}, "body.theta"),
        ({"body": {"h": 0.85}}, "body.h"),
        ({"experiment": {"lambda_grid": [0.1, 0.2]}}, "experiment.lambda_grid"),
    ],
)
def test_invalid_configs_name_the_key(raw, key):
    with pytest.raises(ConfigError) as info:
        resolve_config(raw)
    assert str(info.value).startswith(key)


def test_json_syntax_error_reports_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "fluid": {"mu": 1.0,}\n}')
    with pytest.raises(ConfigError, match="line 2"):
        load_config(str(p))
    with pytest.raises(ConfigError):
        load_config(str(tmp_path / "missing.json"))


def test_overrides():
    cfg = resolve_config({})
    apply_override(cfg, "fluid.lambda=0.2")
    apply_override(cfg, "inflow.kind=polynomial")
    assert cfg["fluid"]["lambda"] == 0.2 and cfg["inflow"]["kind"] == "polynomial"
    with pytest.raises(ConfigError):
        apply_override(cfg, "nokey.x=1")
    with pytest.raises(ConfigError):
        apply_override(cfg, "fluid.lambda")


def test_csv_text_format():
    text = csv_text([{"a": 0.1, "b": True, "c": None, "d": 3}], ["a", "b", "c", "d"])
    assert text == "a,b,c,d\n0.1,true,,3\n"


def test_unknown_key_exits_2(tmp_path, capsys):
    assert main(["lift", write(tmp_path, {"fluid": {"nu": 1}}), "--out", str(tmp_path / "o")]) == 2
    assert "fluid" in capsys.readouterr().err


def test_mesh_dump_matches_library(tmp_path):
    out = tmp_path / "m"
    assert main(["mesh-dump", write(tmp_path, SMALL), "--out", str(out), "--theta", "0.2"]) == 0
    sc = cli.Scenario(resolve_config({**SMALL, "body": {"theta": 0.2}}))
    assert (out / "mesh.txt").read_text() == dump(sc.mesh_options.build(sc.geometry, sc.placement))


def test_lift_csv_matches_library_and_manifest_is_stable(tmp_path):
    cfg = {**SMALL, "body": {"theta": 0.25, "h_grid": [-0.1, 0.1]}}
    p = write(tmp_path, cfg)
    assert main(["lift", p, "--out", str(tmp_path / "a")]) == 0
    assert main(["lift", p, "--out", str(tmp_path / "b")]) == 0
    ma = (tmp_path / "a" / "manifest.json").read_text()
    assert ma == (tmp_path / "b" / "manifest.json").read_text()
    man = json.loads(ma)
    assert man["status"] == "PASS"
    names = {f["path"] for f in man["files"]}
    assert {"lift_curve.csv", "certificate.txt", "config.resolved.json", "lift_curve.svg"} <= names
    sc = cli.Scenario(resolve_config(cfg))
    rows = lift_curve(sc.problem(), [-0.1, 0.1], sc.mesh_options, sc.solver_options)
    lib = [{c: r[c] for c in LIFT_CURVE_COLUMNS} for r in rows]
    cli_rows = (tmp_path / "a" / "lift_curve.csv").read_text().splitlines()
    assert csv_text(lib, LIFT_CURVE_COLUMNS).splitlines()[1:] == [",".join(l.split(",")[: len(LIFT_CURVE_COLUMNS)]) for l in cli_rows[1:]]


def test_failed_certificate_gives_nonzero_exit(tmp_path, capsys):
    cfg = {**SMALL, "body": {"theta": 0.25}, "experiment": {"discrepancy_tol": 1e-12}}
    assert main(["lift", write(tmp_path, cfg), "--out", str(tmp_path / "f")]) == 1
    out = capsys.readouterr().out
    assert "formula_equivalence: FAIL" in out and out.rstrip().endswith("status: FAIL")


def test_zero_lambda_equilibrium_and_run_subcommand(tmp_path):
    cfg = {**SMALL, "fluid": {"lambda": 0.0}, "experiment": {"kind": "equilibrium"}}
    assert main(["run", write(tmp_path, cfg), "--out", str(tmp_path / "e")]) == 0
    cert = (tmp_path / "e" / "certificate.txt").read_text()
    assert "h_star: 0.0" in cert and "status: PASS" in cert
    assert main(["run", "-", "--out", str(tmp_path / "x")]) == 2  # no experiment kind


def test_continuation_csv_matches_library(tmp_path):
    from channelfsi.fsi import continuation

    cfg = {**SMALL, "body": {"theta": 0.25}, "experiment": {"lambda_grid": [0.0, 0.05]}}
    assert main(["continuation", write(tmp_path, cfg), "--out", str(tmp_path / "c")]) == 0
    sc = cli.Scenario(resolve_config(cfg))
    res, _ = continuation(sc.problem(), sc.force(), [0.0, 0.05], sc.mesh_options, sc.solver_options)
    rows = [{"lam": r.lam, "h_star": r.h_star, "lift": r.lift, "iterations": r.iterations, "stop": r.stop} for r in res]
    expect = csv_text(rows, ["lam", "h_star", "lift", "iterations", "stop"])
    assert (tmp_path / "c" / "continuation.csv").read_text() == expect


def test_symmetry_config_writes_certificate(tmp_path):
    cfg = {
        **SMALL,
        "inflow": {"kind": "polynomial", "U": 1, "coef_in": [1.5, 0.0, -0.5], "symmetric": True},
        "experiment": {"lambdas": [0.0, 0.01]},
    }
    assert main(["symmetry", write(tmp_path, cfg), "--out", str(tmp_path / "s")]) == 0
    assert "symmetry_lam_0.01: PASS" in (tmp_path / "s" / "certificate.txt").read_text()
    assert (tmp_path / "s" / "symmetry.csv").exists()
