"""Config resolution, artifact writing, engine dispatch, exit codes, and
byte-level determinism of the command-line front end."""

import json
import os

import numpy as np
import pytest

from cochleasim import presets
from cochleasim.cli import (
    DEFAULT_CONFIG,
    EXIT_CHECK_FAILED,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_UNSTABLE,
    ConfigError,
    build_params,
    config_digest,
    config_from_preset,
    load_config,
    main,
    resolve_config,
    run_from_config,
    write_outputs,
)

SMALL = {
    "r": 0.3,
    "nonlinearity": {"kind": "exp_rayleigh", "rho": 0.1, "c": 0.05},
    "forcing": {"tones": [{"amp": 0.01, "omega": 2.0}], "ramp_time": 1.0},
    "delta": 0.05,
    "grid": {"n": 32, "nz": 17, "dt": 1e-3, "t_final": 5.0,
             "snapshot_window": 2.0},
    "rho_field": {"mean": 0.1, "std": 0.02, "seed": 11},
}


def write_config(tmp_path, raw, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(raw))
    return str(path)


def test_resolve_config_fills_defaults():
    cfg = resolve_config({})
    assert cfg["m"] == 1.0 and cfg["engine"] == "spectral"
    assert cfg["grid"]["n"] == 128
    assert cfg["forcing"]["tones"] == []
    # defaults are copied, not shared
    cfg["grid"]["n"] = 7
    assert DEFAULT_CONFIG["grid"]["n"] == 128


def test_resolve_config_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="mass"):
        resolve_config({"mass": 2.0})
    with pytest.raises(ConfigError, match="stiffness"):
        resolve_config({"stiffness": {"k0": 1.0, "beta": 2.0}})
    with pytest.raises(ConfigError, match="tones"):
        resolve_config({"forcing": {"tones": [{"amp": 1.0, "freq": 2.0}]}})
    with pytest.raises(ConfigError, match="rho_field"):
        resolve_config({"rho_field": {"mean": 0.1, "width": 0.2}})


@pytest.mark.parametrize("raw", [
    {"m": "heavy"},
    {"m": True},
    {"engine": "exact"},
    {"seed": "abc"},
    {"nonlinearity": {"kind": "cubic"}},
    {"forcing": {"tones": {"amp": 1.0}}},
    {"forcing": {"tones": [{"amp": 1.0}]}},
    {"grid": {"n": 64.0}},
    {"rho_field": {"mean": 0.1, "std": 0.0, "seed": 1.5}},
    "not a dict",
])
def test_resolve_config_rejects_bad_types(raw):
    with pytest.raises(ConfigError):
        resolve_config(raw)


def test_load_config_skips_digest_header(tmp_path):
    cfg = resolve_config(SMALL)
    digest = config_digest(cfg)
    path = tmp_path / "echo.json"
    path.write_text(f"# config-digest: {digest}\n# extra comment\n"
                    + json.dumps(SMALL))
    reloaded = load_config(str(path))
    assert reloaded == cfg
    assert config_digest(reloaded) == digest


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("# only a comment\n{broken")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(str(bad))


def test_config_digest_is_stable_and_sensitive():
    a = config_digest(resolve_config(SMALL))
    b = config_digest(resolve_config(json.loads(json.dumps(SMALL))))
    assert a == b and len(a) == 16 and int(a, 16) >= 0
    other = json.loads(json.dumps(SMALL))
    other["delta"] = 0.1
    assert config_digest(resolve_config(other)) != a


def test_build_params_round_trips_presets():
    for name in ("fig1-passive", "fig1-active", "fig2-active", "otoacoustic"):
        pre = presets.preset(name)
        p, g = build_params(config_from_preset(pre))
        assert p == pre.params and g == pre.grid


def test_build_params_rejects_invalid():
    bad = json.loads(json.dumps(SMALL))
    bad["grid"]["dt"] = -1.0
    with pytest.raises(ConfigError):
        build_params(resolve_config(bad))
    bad = json.loads(json.dumps(SMALL))
    bad["nonlinearity"]["rho"] = 0.5        # rho >= r
    bad["rho_field"] = None
    with pytest.raises(ConfigError, match="rho"):
        build_params(resolve_config(bad))


def test_write_outputs_atomic_and_formatted(tmp_path):
    out = str(tmp_path / "arts")
    write_outputs(out, {
        "a.csv": ("csv", "deadbeefdeadbeef", ("x", "flag", "k"),
                  [(0.30000000000000004, True, 3)]),
        "b.json": ("json", "deadbeefdeadbeef", {"z": 1.25}),
        "sub/c.txt": ("text", "deadbeefdeadbeef", "payload\n"),
    })
    acsv = (tmp_path / "arts" / "a.csv").read_text().splitlines()
    assert acsv[0] == "# config-digest: deadbeefdeadbeef"
    assert acsv[1] == "x,flag,k"
    val, flag, k = acsv[2].split(",")
    assert float(val) == 0.30000000000000004      # 17 digits round-trip
    assert flag == "true" and k == "3"
    bj = (tmp_path / "arts" / "b.json").read_text().splitlines()
    assert bj[0] == "# config-digest: deadbeefdeadbeef"
    assert json.loads("\n".join(bj[1:])) == {"z": 1.25}
    assert (tmp_path / "arts" / "sub" / "c.txt").read_text().endswith("payload\n")
    leftovers = [f for f in os.listdir(out) if f.startswith(".tmp-")]
    assert leftovers == []
    with pytest.raises(ValueError, match="artifact kind"):
        write_outputs(out, {"d.bin": ("binary", "deadbeefdeadbeef", b"")})


def test_run_from_config_engines_agree():
    cfg = resolve_config(SMALL)
    cfg["grid"]["nz"] = 33
    ts = run_from_config(cfg, engine="spectral")
    tf = run_from_config(cfg, engine="fd")
    assert ts.engine == "spectral" and tf.engine == "fd"
    assert np.array_equal(ts.ts, tf.ts)
    rel = (np.linalg.norm(ts.v[-1] - tf.v[-1])
           / max(np.linalg.norm(ts.v[-1]), 1e-300))
    assert rel < 1e-2
    with pytest.raises(ConfigError, match="engine"):
        run_from_config(cfg, engine="exact")


def test_run_from_config_default_cadence():
    cfg = resolve_config(SMALL)
    tr = run_from_config(cfg)
    assert tr.sample_every == 50                   # 0.05 time units at dt=1e-3
    assert tr.ts[1] - tr.ts[0] == pytest.approx(0.05)


def test_simulate_cli_byte_identical_reruns(tmp_path):
    path = write_config(tmp_path, SMALL)
    out1 = str(tmp_path / "run1")
    out2 = str(tmp_path / "run2")
    assert main(["--gnuplot", "simulate", "--config", path, "--out", out1]) == EXIT_OK
    assert main(["--gnuplot", "simulate", "--config", path, "--out", out2]) == EXIT_OK
    names = sorted(os.listdir(out1))
    assert names == ["config.json", "field.csv", "plot.gp", "snapshot.csv",
                     "summary.json", "trace.csv"]
    digest = config_digest(resolve_config(SMALL))
    for name in names:
        b1 = open(os.path.join(out1, name), "rb").read()
        b2 = open(os.path.join(out2, name), "rb").read()
        assert b1 == b2, name
        assert b1.decode().splitlines()[0] == f"# config-digest: {digest}"
    # the echoed config reloads to the same resolved dict
    assert load_config(os.path.join(out1, "config.json")) == resolve_config(SMALL)


def test_simulate_cli_exit_codes(tmp_path):
    bad = write_config(tmp_path, {"mass": 1.0}, "bad.json")
    out = str(tmp_path / "o")
    assert main(["simulate", "--config", bad, "--out", out]) == EXIT_CONFIG

    unstable = write_config(tmp_path, {
        "stiffness": {"k0": 2000.0, "alpha": 0.0},
        "forcing": {"tones": [{"amp": 0.1, "omega": 2.0}], "ramp_time": 0.0},
        "grid": {"n": 16, "nz": 5, "dt": 0.5, "t_final": 60.0,
                 "snapshot_window": 1.0},
    }, "unstable.json")
    with np.errstate(over="ignore", invalid="ignore"):
        code = main(["simulate", "--config", unstable, "--out", out])
    assert code == EXIT_UNSTABLE

    with pytest.raises(SystemExit):
        main(["scenario", "no-such-scenario"])
    with pytest.raises(SystemExit):
        main([])


def test_converge_cli_bad_deltas(tmp_path):
    path = write_config(tmp_path, SMALL)
    out = str(tmp_path / "c")
    assert main(["converge", "--config", path, "--deltas", "0.2,x",
                 "--out", out]) == EXIT_CONFIG
    assert main(["converge", "--config", path, "--deltas", "0.2,0.1",
                 "--out", out]) == EXIT_CONFIG


def test_audit_cli_small_run(tmp_path):
    raw = json.loads(json.dumps(SMALL))
    raw["delta"] = 0.0
    raw["grid"]["dt"] = 2e-3
    path = write_config(tmp_path, raw)
    out = str(tmp_path / "audit")
    assert main(["audit", "--config", path, "--out", out]) == EXIT_OK
    summary = json.loads("\n".join(
        open(os.path.join(out, "summary.json")).read().splitlines()[1:]))
    assert summary["fitted_order"] >= 1.9
    assert summary["relative_residuals"][0] < 1e-4
    rows = open(os.path.join(out, "audit.csv")).read().splitlines()
    assert rows[1].split(",")[0] == "dt"
    assert len(rows) == 5                          # header comment + 3 dts


def test_oracle_scenario_cli(tmp_path, capsys):
    out = str(tmp_path / "oracle")
    assert main(["scenario", "oracle-suite", "--out", out]) == EXIT_OK
    captured = capsys.readouterr().out
    assert captured.count("[ok]") >= 6 and "FAIL" not in captured
    doc = json.loads("\n".join(
        open(os.path.join(out, "oracle.json")).read().splitlines()[1:]))
    assert all(c["ok"] for c in doc["checks"])
