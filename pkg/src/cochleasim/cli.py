"""Command-line front end: config files, scenario runs, output writing.

Outputs are deterministic: every file starts with a `# config-digest:`
line derived from the resolved configuration, floats are written with 17
significant digits, and files land via temp-file rename so readers never
see partial content.

Exit codes: 0 success, 1 a scenario check failed, 2 bad usage or config,
3 the integration went unstable.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import diagnostics, fdref, presets, solver
from .model import (
    Forcing,
    Grid,
    MembraneState,
    ModelParams,
    Nonlinearity,
    RhoField,
    StiffnessProfile,
    validate_params,
)
from .solver import InstabilityError, SimulationTrace
from .spectral import dst_forward, reconstruct_pressure_field

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_UNSTABLE = 3

SCENARIOS = ("fig1-passive", "fig1-active", "fig2-passive", "fig2-active",
             "convergence", "energy-audit", "otoacoustic", "oracle-suite")


class ConfigError(ValueError):
    pass


_TOP_KEYS = {"m", "r", "stiffness", "nonlinearity", "forcing", "delta",
             "grid", "rho_field", "engine", "seed"}
_SECTION_KEYS = {
    "stiffness": {"k0", "alpha"},
    "nonlinearity": {"kind", "rho", "c"},
    "forcing": {"tones", "ramp_time"},
    "grid": {"n", "nz", "dt", "t_final", "snapshot_window"},
    "rho_field": {"mean", "std", "seed"},
}

DEFAULT_CONFIG = {
    "m": 1.0,
    "r": 0.3,
    "stiffness": {"k0": 400.0, "alpha": 9.6},
    "nonlinearity": {"kind": "passive", "rho": 0.0, "c": None},
    "forcing": {"tones": [], "ramp_time": 0.0},
    "delta": 0.0,
    "grid": {"n": 128, "nz": 65, "dt": 1e-3, "t_final": 200.0,
             "snapshot_window": 50.0},
    "rho_field": None,
    "engine": "spectral",
    "seed": None,
}


def _check_keys(d: dict, allowed: set, where: str):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


def _num(d: dict, key: str, where: str, allow_none=False):
    v = d[key]
    if v is None and allow_none:
        return None
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key} must be a number, got {v!r}")
    return float(v)


def resolve_config(raw: dict) -> dict:
    """Apply defaults and reject unknown keys; returns a plain dict."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    _check_keys(raw, _TOP_KEYS, "config")
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))
    for key in ("m", "r", "delta"):
        if key in raw:
            cfg[key] = _num(raw, key, "config")
    if "engine" in raw:
        if raw["engine"] not in ("spectral", "fd"):
            raise ConfigError("engine must be 'spectral' or 'fd'")
        cfg["engine"] = raw["engine"]
    if "seed" in raw:
        if raw["seed"] is not None and not isinstance(raw["seed"], int):
            raise ConfigError("seed must be an integer or null")
        cfg["seed"] = raw["seed"]
    for sec in ("stiffness", "nonlinearity", "forcing", "grid"):
        if sec in raw:
            if not isinstance(raw[sec], dict):
                raise ConfigError(f"{sec} must be an object")
            _check_keys(raw[sec], _SECTION_KEYS[sec], sec)
            cfg[sec].update(raw[sec])
    if "rho_field" in raw:
        rf = raw["rho_field"]
        if rf is not None:
            if not isinstance(rf, dict):
                raise ConfigError("rho_field must be an object or null")
            _check_keys(rf, _SECTION_KEYS["rho_field"], "rho_field")
            base = {"mean": 0.0, "std": 0.0, "seed": cfg["seed"] or 0}
            base.update(rf)
            rf = base
        cfg["rho_field"] = rf

    # normalize leaf types
    st = cfg["stiffness"]
    st["k0"] = _num(st, "k0", "stiffness")
    st["alpha"] = _num(st, "alpha", "stiffness")
    nl = cfg["nonlinearity"]
    if nl["kind"] not in ("passive", "exp_rayleigh", "tanh_rayleigh"):
        raise ConfigError(f"unknown nonlinearity kind {nl['kind']!r}")
    nl["rho"] = _num(nl, "rho", "nonlinearity")
    nl["c"] = _num(nl, "c", "nonlinearity", allow_none=True)
    fo = cfg["forcing"]
    fo["ramp_time"] = _num(fo, "ramp_time", "forcing")
    if not isinstance(fo["tones"], list):
        raise ConfigError("forcing.tones must be a list")
    tones = []
    for i, tone in enumerate(fo["tones"]):
        if not isinstance(tone, dict):
            raise ConfigError(f"forcing.tones[{i}] must be an object")
        _check_keys(tone, {"amp", "omega"}, f"forcing.tones[{i}]")
        if "amp" not in tone or "omega" not in tone:
            raise ConfigError(f"forcing.tones[{i}] needs amp and omega")
        tones.append({"amp": _num(tone, "amp", f"forcing.tones[{i}]"),
                      "omega": _num(tone, "omega", f"forcing.tones[{i}]")})
    fo["tones"] = tones
    gr = cfg["grid"]
    for key in ("dt", "t_final", "snapshot_window"):
        gr[key] = _num(gr, key, "grid")
    for key in ("n", "nz"):
        v = gr[key]
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"grid.{key} must be an integer")
    if cfg["rho_field"] is not None:
        rf = cfg["rho_field"]
        rf["mean"] = _num(rf, "mean", "rho_field")
        rf["std"] = _num(rf, "std", "rho_field")
        if not isinstance(rf["seed"], int):
            raise ConfigError("rho_field.seed must be an integer")
    return cfg


def load_config(path: str) -> dict:
    """Read a config file, tolerating leading comment lines (the digest
    header written by this tool), and resolve it against the defaults."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}")
    lines = text.splitlines()
    k = 0
    while k < len(lines) and lines[k].lstrip().startswith("#"):
        k += 1
    body = "\n".join(lines[k:])
    try:
        raw = json.loads(body)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}")
    return resolve_config(raw)


def config_digest(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def build_params(cfg: dict):
    """Turn a resolved config into (ModelParams, Grid)."""
    rf = cfg["rho_field"]
    rho_field = None if rf is None else RhoField(mean=rf["mean"],
                                                 std=rf["std"],
                                                 seed=rf["seed"])
    p = ModelParams(
        m=cfg["m"], r=cfg["r"],
        stiffness=StiffnessProfile(k0=cfg["stiffness"]["k0"],
                                   alpha=cfg["stiffness"]["alpha"]),
        nonlinearity=Nonlinearity(kind=cfg["nonlinearity"]["kind"],
                                  rho=cfg["nonlinearity"]["rho"],
                                  c=cfg["nonlinearity"]["c"]),
        forcing=Forcing(tones=tuple((t["amp"], t["omega"])
                                    for t in cfg["forcing"]["tones"]),
                        ramp_time=cfg["forcing"]["ramp_time"]),
        delta=cfg["delta"], rho_field=rho_field)
    gr = cfg["grid"]
    try:
        g = Grid(n=gr["n"], nz=gr["nz"], dt=gr["dt"], t_final=gr["t_final"],
                 snapshot_window=gr["snapshot_window"])
    except ValueError as e:
        raise ConfigError(str(e))
    report = validate_params(p, n=g.n)
    if not report.ok:
        raise ConfigError("invalid parameters: " + "; ".join(report.errors))
    return p, g


def config_from_preset(pre: presets.Preset) -> dict:
    """Config dict equivalent to a named preset (for echo files)."""
    p, g = pre.params, pre.grid
    cfg = {
        "m": p.m, "r": p.r,
        "stiffness": {"k0": p.stiffness.k0, "alpha": p.stiffness.alpha},
        "nonlinearity": {"kind": p.nonlinearity.kind,
                         "rho": p.nonlinearity.rho, "c": p.nonlinearity.c},
        "forcing": {"tones": [{"amp": a, "omega": w}
                              for a, w in p.forcing.tones],
                    "ramp_time": p.forcing.ramp_time},
        "delta": p.delta,
        "grid": {"n": g.n, "nz": g.nz, "dt": g.dt, "t_final": g.t_final,
                 "snapshot_window": g.snapshot_window},
        "rho_field": None if p.rho_field is None else {
            "mean": p.rho_field.mean, "std": p.rho_field.std,
            "seed": p.rho_field.seed},
        "engine": "spectral",
        "seed": None,
    }
    return resolve_config(cfg)


# ---------------------------------------------------------------- output

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def _atomic_write(path: str, text: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_csv(path: str, digest: str, header, rows):
    lines = [f"# config-digest: {digest}", ",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _atomic_write(path, "\n".join(lines) + "\n")


def write_json_doc(path: str, digest: str, obj):
    body = json.dumps(obj, indent=2, sort_keys=True)
    _atomic_write(path, f"# config-digest: {digest}\n{body}\n")


def write_outputs(out_dir: str, artifacts: dict):
    """Write a batch of artifacts under out_dir.

    artifacts maps relative path -> ("csv", digest, header, rows)
    or ("json", digest, obj) or ("text", digest, str)."""
    for rel, spec in artifacts.items():
        path = os.path.join(out_dir, rel)
        kind = spec[0]
        if kind == "csv":
            _, digest, header, rows = spec
            write_csv(path, digest, header, rows)
        elif kind == "json":
            _, digest, obj = spec
            write_json_doc(path, digest, obj)
        elif kind == "text":
            _, digest, text = spec
            _atomic_write(path, f"# config-digest: {digest}\n{text}")
        else:
            raise ValueError(f"unknown artifact kind {kind!r}")


# ------------------------------------------------------------- run engine

def run_from_config(cfg: dict, engine: Optional[str] = None,
                    sample_every: Optional[int] = None,
                    initial_state: Optional[MembraneState] = None
                    ) -> SimulationTrace:
    p, g = build_params(cfg)
    eng = engine or cfg["engine"]
    if sample_every is None:
        sample_every = max(1, int(round(0.05 / g.dt)))
    if eng == "spectral":
        return solver.simulate(p, g, sample_every=sample_every,
                               initial_state=initial_state)
    if eng != "fd":
        raise ConfigError(f"unknown engine {eng!r}")
    if p.delta == 0:
        def accel(v, w, t):
            return fdref.fd_reduced_accel_solve(MembraneState(t, v, w), t, p)
    else:
        def accel(v, w, t):
            return fdref.fd_full_coupled_accel_solve(
                MembraneState(t, v, w), t, p, nz=g.nz, method="bordered")
    return solver.run_with_accel(p, g, accel, sample_every=sample_every,
                                 initial_state=initial_state,
                                 engine_name="fd")


def _trace_rows(trace: SimulationTrace):
    """Downsample the sample grid to roughly 0.5 time units per row."""
    dt_s = trace.ts[1] - trace.ts[0] if len(trace.ts) > 1 else 1.0
    stride = max(1, int(round(0.5 / dt_s)))
    idx = list(range(0, len(trace.ts), stride))
    if idx[-1] != len(trace.ts) - 1:
        idx.append(len(trace.ts) - 1)
    wq = 1.0 / (trace.n + 1)
    rows = []
    for i in idx:
        rms_v = float(np.sqrt(wq * np.sum(trace.v[i] ** 2)))
        rms_w = float(np.sqrt(wq * np.sum(trace.vdot[i] ** 2)))
        rows.append((trace.ts[i], trace.f_vals[i], rms_v, rms_w,
                     float(np.max(np.abs(trace.v[i]))),
                     trace.interaction_cum[i]))
    return rows


def _run_summary(trace: SimulationTrace) -> dict:
    rep = diagnostics.energy_audit(trace)
    env = diagnostics.envelope_and_peaks(trace)
    direct, spectral = diagnostics.interaction_energy(trace)
    summary = {
        "engine": trace.engine,
        "t_final": float(trace.ts[-1]),
        "energy": {
            "membrane_energy": rep.membrane_energy,
            "initial_energy": rep.initial_energy,
            "friction_dissipation": rep.friction_dissipation,
            "fluid_work": rep.fluid_work,
            "active_input": rep.active_input,
            "residual": rep.residual,
            "relative_residual": rep.relative_residual,
        },
        "interaction": {"direct": direct, "spectral": spectral},
        "envelope": {
            "max": float(np.max(env.envelope)),
            "peak_locations": [float(v) for v in env.peak_locations[:4]],
            "peak_heights": [float(v) for v in env.peak_heights[:4]],
            "dip": env.dip,
        },
    }
    if not any(abs(a) > 0 for a, _ in trace.params.forcing.tones):
        m = diagnostics.otoacoustic_metric(trace)
        summary["emission"] = {
            "trailing_rms": m.trailing_rms,
            "transient_scale": m.transient_scale,
            "sustained_fraction": m.sustained_fraction,
        }
    return summary


_GNUPLOT_RUN = """\
set datafile separator ","
set terminal pngcairo size 900,600
set output "envelope.png"
set xlabel "x"
set ylabel "deflection envelope"
plot "snapshot.csv" using 1:2 with lines title "envelope"
set output "trace.png"
set xlabel "t"
set ylabel "rms deflection"
plot "trace.csv" using 1:3 with lines title "rms v"
"""


def run_artifacts(cfg: dict, trace: SimulationTrace,
                  gnuplot: bool = False) -> dict:
    """Standard per-run artifact set keyed by relative filename."""
    digest = config_digest(cfg)
    env = diagnostics.envelope_and_peaks(trace)
    arts = {
        "config.json": ("json", digest, cfg),
        "trace.csv": ("csv", digest,
                      ("t", "f", "rms_v", "rms_vdot", "max_abs_v",
                       "interaction_cum"),
                      _trace_rows(trace)),
        "snapshot.csv": ("csv", digest,
                         ("x", "envelope", "v_final", "vdot_final",
                          "p_bottom_final"),
                         [(trace.x[j], env.envelope[j], trace.v[-1, j],
                           trace.vdot[-1, j], trace.p_bottom[-1, j])
                          for j in range(trace.n)]),
        "summary.json": ("json", digest, _run_summary(trace)),
    }
    if trace.params.delta > 0:
        spec = dst_forward(trace.accel[-1])
        fld = reconstruct_pressure_field(spec, float(trace.f_vals[-1]),
                                         trace.params.delta, trace.grid.nz)
        rows = []
        for j in range(fld.values.shape[0]):
            for l in range(fld.values.shape[1]):
                rows.append((fld.x[j], fld.z[l], fld.values[j, l]))
        arts["field.csv"] = ("csv", digest, ("x", "z", "p"), rows)
    if gnuplot:
        arts["plot.gp"] = ("text", digest, _GNUPLOT_RUN)
    return arts


# --------------------------------------------------------------- scenarios

@dataclass
class ScenarioResult:
    name: str
    exit_code: int
    checks: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)


def _check(checks: list, name: str, ok: bool, detail: str,
           expected_fail: bool = False):
    entry = {"name": name, "ok": bool(ok), "detail": detail}
    if expected_fail:
        entry["expected_fail"] = True
    checks.append(entry)
    return ok


def _run_preset(name: str, engine: Optional[str] = None):
    pre = presets.preset(name)
    cfg = config_from_preset(pre)
    if engine:
        cfg["engine"] = engine
    state = None
    if pre.kick > 0:
        state = presets.kick_state(pre.grid.n, pre.kick)
    trace = run_from_config(cfg, sample_every=pre.sample_every,
                            initial_state=state)
    return cfg, trace


def _scenario_figure(name: str, out: str, gnuplot: bool) -> ScenarioResult:
    cfg, trace = _run_preset(name)
    arts = {}
    for rel, spec in run_artifacts(cfg, trace, gnuplot).items():
        arts[os.path.join("run", rel)] = spec
    checks = []
    env = diagnostics.envelope_and_peaks(trace)
    metrics = {"dip": env.dip,
               "peak_locations": [float(v) for v in env.peak_locations[:4]]}

    if name.startswith("fig1"):
        targets = sorted(presets.FIG1_PEAK_TARGETS)
        got = sorted(env.peak_locations[:2]) if len(env.peak_locations) >= 2 else []
        ok = (len(got) == 2
              and all(abs(a - b) <= 0.05 for a, b in zip(got, targets)))
        _check(checks, "peaks_at_resonances", ok,
               f"two tallest peaks {got} vs tone resonances {targets} "
               f"(tolerance 0.05)")
        if name == "fig1-active":
            cfg_p, trace_p = _run_preset("fig1-passive")
            for rel, spec in run_artifacts(cfg_p, trace_p, gnuplot).items():
                arts[os.path.join("passive", rel)] = spec
            ratio = diagnostics.amplification_ratio(trace, trace_p)
            metrics["amplification_ratio"] = ratio
            _check(checks, "amplification_ratio", 5.0 <= ratio <= 20.0,
                   f"active/passive envelope ratio {ratio:.3f} in [5, 20]")
    else:
        separated = env.dip >= 0.25
        metrics["separation"] = "pass" if separated else "fail"
        if name == "fig2-active":
            _check(checks, "tone_separation", separated,
                   f"envelope dip {env.dip:.3f} >= 0.25")
        else:
            # the passive run is expected NOT to separate the tones
            _check(checks, "tone_separation_absent", not separated,
                   f"envelope dip {env.dip:.3f} < 0.25 as expected for the "
                   f"passive membrane", expected_fail=True)

    digest = config_digest(cfg)
    result = ScenarioResult(name=name,
                            exit_code=EXIT_OK if all(c["ok"] for c in checks)
                            else EXIT_CHECK_FAILED,
                            checks=checks,
                            summary={"scenario": name, "metrics": metrics,
                                     "checks": checks})
    arts["summary.json"] = ("json", digest, result.summary)
    write_outputs(out, arts)
    return result


def converge_once(cfg: dict, deltas, workers: int = 1):
    """Full-vs-reduced error norms for each chamber height in deltas.

    Returns (rows, orders) where rows are convergence.csv rows and orders
    maps norm name -> OrderFit across the ladder."""
    from concurrent.futures import ThreadPoolExecutor

    base = json.loads(json.dumps(cfg))

    def one(delta: float):
        cfull = json.loads(json.dumps(base))
        cfull["delta"] = float(delta)
        cred = json.loads(json.dumps(base))
        cred["delta"] = 0.0
        tf = run_from_config(cfull, sample_every=20)
        tr = run_from_config(cred, sample_every=20)
        norms = diagnostics.model_error_norms(tf, tr, nz=cfg["grid"]["nz"])
        return delta, norms

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(one, deltas))
    else:
        results = [one(d) for d in deltas]
    results.sort(key=lambda t: -t[0])

    rows = []
    for delta, norms in results:
        rows.append((delta,) + tuple(norms[k] for k in diagnostics.NORM_KEYS))
    orders = {}
    for i, key in enumerate(diagnostics.NORM_KEYS):
        pairs = [(row[0], row[1 + i]) for row in rows]
        orders[key] = diagnostics.fit_convergence_order(pairs)
    return rows, orders


def _scenario_convergence(out: str, gnuplot: bool,
                          workers: int = 1) -> ScenarioResult:
    checks = []
    metrics = {}
    arts = {}
    deltas = presets.CONVERGENCE_DELTAS
    digest = None
    for variant in ("passive", "active"):
        pre = presets.preset(f"fig1-{variant}")
        cfg = config_from_preset(pre)
        cfg["grid"]["t_final"] = presets.CONVERGENCE_T_FINAL
        cfg = resolve_config(cfg)
        if digest is None:
            digest = config_digest(cfg)
        rows, orders = converge_once(cfg, deltas, workers=workers)
        arts[f"convergence-{variant}.csv"] = (
            "csv", config_digest(cfg),
            ("delta",) + diagnostics.NORM_KEYS, rows)
        metrics[variant] = {k: {"order": o.slope, "rms_residual": o.rms_residual}
                            for k, o in orders.items()}
        worst = min(o.slope for o in orders.values())
        worst_rms = max(o.rms_residual for o in orders.values())
        _check(checks, f"{variant}_norm_orders", worst >= 1.8,
               f"smallest fitted squared-norm order {worst:.2f} >= 1.8")
        _check(checks, f"{variant}_fit_quality", worst_rms < 0.15,
               f"largest rms log-residual {worst_rms:.3f} < 0.15")
        mono = all(all(rows[i][1 + j] > rows[i + 1][1 + j]
                       for i in range(len(rows) - 1))
                   for j in range(len(diagnostics.NORM_KEYS)))
        _check(checks, f"{variant}_monotone", mono,
               "all norms shrink monotonically with the chamber height")
    result = ScenarioResult(
        name="convergence",
        exit_code=EXIT_OK if all(c["ok"] for c in checks) else EXIT_CHECK_FAILED,
        checks=checks,
        summary={"scenario": "convergence",
                 "deltas": list(deltas), "metrics": metrics, "checks": checks})
    arts["summary.json"] = ("json", digest, result.summary)
    write_outputs(out, arts)
    return result


def audit_once(cfg: dict, dts) -> list:
    """Energy-audit the config at each dt; returns (dt, report) pairs."""
    out = []
    for dt in dts:
        c = json.loads(json.dumps(cfg))
        c["grid"]["dt"] = float(dt)
        trace = run_from_config(c)
        out.append((float(dt), diagnostics.energy_audit(trace)))
    return out


def _scenario_energy_audit(out: str, gnuplot: bool) -> ScenarioResult:
    checks = []
    metrics = {}
    arts = {}
    rows = []
    digest = None
    for name in ("fig1-passive", "fig1-active", "fig2-passive", "fig2-active"):
        cfg, trace = _run_preset(name)
        if digest is None:
            digest = config_digest(cfg)
        rep = diagnostics.energy_audit(trace)
        metrics[name] = {"relative_residual": rep.relative_residual,
                         "membrane_energy": rep.membrane_energy}
        rows.append((name, trace.grid.dt, rep.membrane_energy, rep.residual,
                     rep.relative_residual))
        _check(checks, f"{name}_balance", rep.relative_residual < 1e-4,
               f"relative energy residual {rep.relative_residual:.3e} < 1e-4")

    pre = presets.preset("fig1-active")
    cfg = config_from_preset(pre)
    cfg["grid"]["t_final"] = presets.CONVERGENCE_T_FINAL
    cfg = resolve_config(cfg)
    ladder = audit_once(cfg, presets.ENERGY_DTS)
    for dt, rep in ladder:
        rows.append(("fig1-active-ladder", dt, rep.membrane_energy,
                     rep.residual, rep.relative_residual))
    fit = diagnostics.fit_convergence_order(
        [(dt, max(abs(rep.residual), 1e-300)) for dt, rep in ladder])
    metrics["ladder_order"] = fit.slope
    _check(checks, "residual_order", fit.slope >= 1.9,
           f"energy residual shrinks at fitted order {fit.slope:.3f} "
           f"(second-order quadrature)")
    arts["energy.csv"] = ("csv", digest,
                          ("run", "dt", "membrane_energy", "residual",
                           "relative_residual"), rows)
    result = ScenarioResult(
        name="energy-audit",
        exit_code=EXIT_OK if all(c["ok"] for c in checks) else EXIT_CHECK_FAILED,
        checks=checks,
        summary={"scenario": "energy-audit", "metrics": metrics,
                 "checks": checks})
    arts["summary.json"] = ("json", digest, result.summary)
    write_outputs(out, arts)
    return result


def _scenario_otoacoustic(out: str, gnuplot: bool) -> ScenarioResult:
    checks = []
    cfg, trace = _run_preset("otoacoustic")
    cfg_t, twin = _run_preset("otoacoustic-twin")
    arts = {}
    for rel, spec in run_artifacts(cfg, trace, gnuplot).items():
        arts[os.path.join("run", rel)] = spec
    for rel, spec in run_artifacts(cfg_t, twin, gnuplot).items():
        arts[os.path.join("twin", rel)] = spec
    m = diagnostics.otoacoustic_metric(trace)
    mt = diagnostics.otoacoustic_metric(twin)
    _check(checks, "irregular_sustains", m.sustained_fraction > 1e-3,
           f"irregular profile keeps ringing: trailing/transient "
           f"{m.sustained_fraction:.3e} > 1e-3")
    _check(checks, "uniform_twin_decays", mt.sustained_fraction < 1e-8,
           f"uniform subcritical twin decays: trailing/transient "
           f"{mt.sustained_fraction:.3e} < 1e-8")
    metrics = {
        "trailing_rms": m.trailing_rms,
        "twin_trailing_rms": mt.trailing_rms,
        "sustained_fraction": m.sustained_fraction,
        "twin_sustained_fraction": mt.sustained_fraction,
    }
    digest = config_digest(cfg)
    result = ScenarioResult(
        name="otoacoustic",
        exit_code=EXIT_OK if all(c["ok"] for c in checks) else EXIT_CHECK_FAILED,
        checks=checks,
        summary={"scenario": "otoacoustic", "metrics": metrics,
                 "checks": checks})
    arts["summary.json"] = ("json", digest, result.summary)
    write_outputs(out, arts)
    return result


def oracle_battery() -> list:
    """The oracle cross-checks shared by the scenario and the test suite.

    Returns a list of check dicts (name, ok, detail, value)."""
    from .spectral import ndt_symbol
    checks = []
    rng = np.random.default_rng(7)

    # a) reduced FD accel vs spectral accel, second-order in the grid
    pre = presets.preset("fig1-active")
    errs = []
    ns = (32, 64, 128, 256)
    for n in ns:
        p = pre.params
        x = np.linspace(0, 1, n + 2)[1:-1]
        state = MembraneState(0.7, np.sin(np.pi * x) * 1e-3,
                              np.cos(2 * np.pi * x) * 1e-3 * x * (1 - x))
        a_sp = solver.acceleration_solve(state, 0.7, p)
        a_fd = fdref.fd_reduced_accel_solve(state, 0.7, p)
        errs.append(float(np.linalg.norm(a_sp - a_fd)
                          / np.linalg.norm(a_sp)))
    fit = diagnostics.fit_convergence_order(
        [(1.0 / (n + 1), e) for n, e in zip(ns, errs)])
    ok = errs[ns.index(128)] < 1e-3 and 1.7 <= fit.slope <= 2.3
    checks.append({"name": "reduced_fd_matches_spectral", "ok": ok,
                   "value": errs[ns.index(128)],
                   "detail": f"relative accel gap {errs[ns.index(128)]:.2e} "
                             f"< 1e-3 at n=128, grid order {fit.slope:.2f}"})

    # b) coupled 2-D FD accel vs spectral accel at delta=0.1
    p128 = presets.chamber_params(delta=0.1)
    x = np.linspace(0, 1, 130)[1:-1]
    state = MembraneState(0.3, 1e-3 * np.sin(2 * np.pi * x),
                          1e-3 * np.sin(np.pi * x) + 1e-4 * rng.standard_normal(128))
    a_sp = solver.acceleration_solve(state, 0.3, p128)
    a_bd = fdref.fd_full_coupled_accel_solve(state, 0.3, p128, nz=128,
                                             method="bordered")
    a_fp = fdref.fd_full_coupled_accel_solve(state, 0.3, p128, nz=128,
                                             method="fixedpoint")
    scale = float(np.linalg.norm(a_sp))
    gap_bd = float(np.linalg.norm(a_sp - a_bd)) / scale
    gap_methods = float(np.linalg.norm(a_bd - a_fp)) / scale
    ok = gap_bd < 1e-2 and gap_methods < 1e-8
    checks.append({"name": "chamber_fd_matches_spectral", "ok": ok,
                   "value": gap_bd,
                   "detail": f"bordered-vs-spectral gap {gap_bd:.2e} < 1e-2 "
                             f"at n=nz=128, bordered-vs-fixedpoint "
                             f"{gap_methods:.2e} < 1e-8"})

    # c) square-chamber symbol value against a direct Laplace solve
    n = nz = 256
    x = np.linspace(0, 1, n + 2)[1:-1]
    prob = fdref.Laplace2DProblem(n=n, nz=nz, delta=1.0, f_val=0.0,
                                  g_bottom=-np.sin(np.pi * x))
    pres = fdref.fd_full_pressure_solve(prob)
    coef = 2.0 / (n + 1) * float(np.sum(pres[:, 0] * np.sin(np.pi * x)))
    exact = float(1.0 / np.tanh(np.pi) / np.pi)
    ok = abs(coef - exact) / exact < 5e-4
    checks.append({"name": "square_chamber_symbol", "ok": ok, "value": coef,
                   "detail": f"fd mode-1 gain {coef:.6f} vs x*coth(x) form "
                             f"{exact:.6f} (3 significant figures)"})

    # d) passive steady state: time-domain envelope vs frequency solve
    worst = 0.0
    for name in ("fig1-passive", "fig2-passive"):
        pre = presets.preset(name)
        cfg = config_from_preset(pre)
        trace = run_from_config(cfg, sample_every=pre.sample_every)
        env = diagnostics.envelope_and_peaks(trace).envelope
        ss = solver.passive_steady_state_oracle(pre.params, pre.grid)
        rel = float(np.linalg.norm(env - ss.envelope)
                    / np.linalg.norm(ss.envelope))
        worst = max(worst, rel)
    checks.append({"name": "steady_state_envelope", "ok": worst < 1e-2,
                   "value": worst,
                   "detail": f"largest time-vs-frequency envelope gap "
                             f"{worst:.2e} < 1e-2"})

    # e) single-mode integrator vs the closed-form oscillator
    ms = np.array([1.0, 1.0, 1.0])
    rs = np.array([0.3, 4.0, 6.0])       # under / critical / over damped
    ks = np.array([4.0, 4.0, 4.0])
    p0 = 1.0
    dt = 1e-4
    nst = int(round(10.0 / dt))
    v = np.zeros(3)
    w = np.zeros(3)

    def accel(vv, ww, tt):
        return (-p0 - rs * ww - ks * vv) / ms

    for i in range(nst):
        v, w = solver.rk4_step(accel, i * dt, v, w, dt)
    errs = []
    for j, r_ in enumerate(rs):
        vx, wx = solver.damped_oscillator_closed_form(1.0, float(r_), 4.0,
                                                      p0, np.array([10.0]))
        errs.append(max(abs(v[j] - vx[0]), abs(w[j] - wx[0])))
    worst = float(max(errs))
    checks.append({"name": "oscillator_closed_form", "ok": worst < 1e-8,
                   "value": worst,
                   "detail": f"largest end-state gap {worst:.2e} < 1e-8 "
                             f"over the three damping regimes"})

    # symbol spot values double-checked against the stable evaluation
    lam1 = float(ndt_symbol(1, 1.0))
    ok = abs(lam1 - exact) < 1e-12 and abs(float(ndt_symbol(1, 0.0))
                                           - 1.0 / np.pi ** 2) < 1e-15
    checks.append({"name": "symbol_limits", "ok": ok, "value": lam1,
                   "detail": "mode-1 gains at delta=1 and delta=0 match the "
                             "closed forms"})
    return checks


def _scenario_oracle(out: str, gnuplot: bool) -> ScenarioResult:
    battery = oracle_battery()
    checks = [{"name": c["name"], "ok": c["ok"], "detail": c["detail"]}
              for c in battery]
    pre = presets.preset("fig1-passive")
    digest = config_digest(config_from_preset(pre))
    result = ScenarioResult(
        name="oracle-suite",
        exit_code=EXIT_OK if all(c["ok"] for c in checks) else EXIT_CHECK_FAILED,
        checks=checks,
        summary={"scenario": "oracle-suite", "checks": checks,
                 "values": {c["name"]: c["value"] for c in battery}})
    write_outputs(out, {
        "oracle.json": ("json", digest, result.summary),
        "summary.json": ("json", digest, result.summary),
    })
    return result


def run_scenario(name: str, out_dir: Optional[str] = None,
                 gnuplot: bool = False, workers: int = 1) -> ScenarioResult:
    """Run a named scenario, writing its artifact tree under out_dir."""
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; choose from "
                          + ", ".join(SCENARIOS))
    out = out_dir or os.path.join("out", name)
    if name.startswith("fig"):
        return _scenario_figure(name, out, gnuplot)
    if name == "convergence":
        return _scenario_convergence(out, gnuplot, workers=workers)
    if name == "energy-audit":
        return _scenario_energy_audit(out, gnuplot)
    if name == "otoacoustic":
        return _scenario_otoacoustic(out, gnuplot)
    return _scenario_oracle(out, gnuplot)


# -------------------------------------------------------------------- main

def main(argv=None) -> int:
    ap = argparse.ArgumentParser(
        prog="cochleasim",
        description="Active cochlea chamber model: simulate, verify, audit.")
    ap.add_argument("--gnuplot", action="store_true",
                    help="also write gnuplot scripts next to the data")
    sub = ap.add_subparsers(dest="cmd", required=True)

    ps = sub.add_parser("simulate", help="run one config")
    ps.add_argument("--config", required=True)
    ps.add_argument("--engine", choices=("spectral", "fd"))
    ps.add_argument("--out", required=True)

    pc = sub.add_parser("scenario", help="run a named scenario with checks")
    pc.add_argument("name", choices=SCENARIOS)
    pc.add_argument("--out")
    pc.add_argument("--workers", type=int, default=1)

    pv = sub.add_parser("converge", help="chamber-height error ladder")
    pv.add_argument("--config", required=True)
    pv.add_argument("--deltas", default="0.2,0.1,0.05,0.025",
                    help="comma-separated chamber heights")
    pv.add_argument("--out", required=True)
    pv.add_argument("--workers", type=int, default=1)

    pa = sub.add_parser("audit", help="energy balance at dt, dt/2, dt/4")
    pa.add_argument("--config", required=True)
    pa.add_argument("--out", required=True)

    args = ap.parse_args(argv)
    try:
        if args.cmd == "simulate":
            cfg = load_config(args.config)
            if args.engine:
                cfg["engine"] = args.engine
            trace = run_from_config(cfg)
            write_outputs(args.out, run_artifacts(cfg, trace, args.gnuplot))
            return EXIT_OK

        if args.cmd == "scenario":
            res = run_scenario(args.name, out_dir=args.out,
                               gnuplot=args.gnuplot, workers=args.workers)
            for c in res.checks:
                mark = "ok" if c["ok"] else "FAIL"
                print(f"[{mark}] {res.name}: {c['name']}: {c['detail']}")
            return res.exit_code

        if args.cmd == "converge":
            cfg = load_config(args.config)
            try:
                deltas = tuple(float(s) for s in args.deltas.split(","))
            except ValueError:
                raise ConfigError(f"bad --deltas value {args.deltas!r}")
            if any(d <= 0 for d in deltas) or len(deltas) < 3:
                raise ConfigError("need at least three positive deltas")
            rows, orders = converge_once(cfg, deltas, workers=args.workers)
            digest = config_digest(cfg)
            summary = {"deltas": list(deltas),
                       "orders": {k: o.slope for k, o in orders.items()},
                       "rms_residuals": {k: o.rms_residual
                                         for k, o in orders.items()}}
            write_outputs(args.out, {
                "convergence.csv": ("csv", digest,
                                    ("delta",) + diagnostics.NORM_KEYS, rows),
                "summary.json": ("json", digest, summary),
            })
            worst = min(o.slope for o in orders.values())
            print(f"smallest fitted order {worst:.2f} over deltas {deltas}")
            return EXIT_OK if worst >= 1.8 else EXIT_CHECK_FAILED

        if args.cmd == "audit":
            cfg = load_config(args.config)
            dt = cfg["grid"]["dt"]
            ladder = audit_once(cfg, (dt, dt / 2.0, dt / 4.0))
            digest = config_digest(cfg)
            rows = [(d, rep.membrane_energy, rep.residual,
                     rep.relative_residual) for d, rep in ladder]
            fit = diagnostics.fit_convergence_order(
                [(d, max(abs(rep.residual), 1e-300)) for d, rep in ladder])
            summary = {"dts": [d for d, _ in ladder],
                       "relative_residuals": [rep.relative_residual
                                              for _, rep in ladder],
                       "fitted_order": fit.slope}
            write_outputs(args.out, {
                "audit.csv": ("csv", digest,
                              ("dt", "membrane_energy", "residual",
                               "relative_residual"), rows),
                "summary.json": ("json", digest, summary),
            })
            ok = ladder[0][1].relative_residual < 1e-4 and fit.slope >= 1.9
            print(f"relative residual {ladder[0][1].relative_residual:.3e} "
                  f"at dt={dt:g}, refinement order {fit.slope:.2f}")
            return EXIT_OK if ok else EXIT_CHECK_FAILED

    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except InstabilityError as e:
        print(f"unstable: {e}", file=sys.stderr)
        return EXIT_UNSTABLE
    except RuntimeError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_UNSTABLE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
