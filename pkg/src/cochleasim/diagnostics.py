"""Post-run analysis: energy accounting, dimension-reduction error norms,
envelope and peak extraction, and the silent-cochlea emission metric."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.fft import dst

from .model import stiffness_at
from .solver import SimulationTrace
from .spectral import _depth_ratio, ndt_symbol

NORM_KEYS = (
    "bottom_pressure",      # averaged chamber pressure vs line pressure
    "deflection",
    "bottom_pressure_x",    # x-derivative of the same difference
    "velocity",
    "slab_pressure",        # full 2-D pressure vs z-constant line pressure
    "bottom_vs_average",    # chamber bottom trace vs its depth average
    "slab_vs_average",      # full 2-D pressure vs its depth average
)


def membrane_energy(trace: SimulationTrace) -> np.ndarray:
    """Discrete membrane energy 0.5*int(m vdot^2 + k v^2) at each sample."""
    n = trace.n
    k = stiffness_at(trace.params.stiffness, trace.x)
    wq = 1.0 / (n + 1)
    return 0.5 * wq * np.sum(trace.params.m * trace.vdot ** 2
                             + k * trace.v ** 2, axis=1)


@dataclass
class EnergyReport:
    T: float
    membrane_energy: float
    initial_energy: float
    friction_dissipation: float
    fluid_work: float
    active_input: float
    residual: float
    relative_residual: float

    def balance_terms(self):
        return (self.membrane_energy, self.initial_energy,
                self.friction_dissipation, self.fluid_work,
                self.active_input)


def energy_audit(trace: SimulationTrace) -> EnergyReport:
    """Check the power balance over the whole run.

    Semi-discretely the identity (E(T) - E(0)) + friction + fluid work
    - active input = 0 holds exactly; the residual left after trapezoid
    time quadrature shrinks at second order in dt.
    """
    eT = float(membrane_energy(trace)[-1])
    e0 = trace.initial_energy
    residual = ((eT - e0) + trace.friction_dissipation
                + trace.fluid_work - trace.active_input)
    scale = max(abs(eT), abs(e0), abs(trace.friction_dissipation),
                abs(trace.fluid_work), abs(trace.active_input), 1e-300)
    return EnergyReport(T=float(trace.ts[-1]), membrane_energy=eT,
                        initial_energy=e0,
                        friction_dissipation=trace.friction_dissipation,
                        fluid_work=trace.fluid_work,
                        active_input=trace.active_input,
                        residual=residual,
                        relative_residual=abs(residual) / scale)


def _velocity_spectra(trace: SimulationTrace) -> np.ndarray:
    n = trace.n
    return dst(trace.vdot, type=1, axis=1) / (n + 1)


def interaction_energy(trace: SimulationTrace,
                       delta: Optional[float] = None):
    """Total fluid-coupling work, two ways.

    Returns (direct, spectral): the time-quadrature accumulator from the
    run and the closed form sum(lam_n * (gamma_n(T)^2 - gamma_n(0)^2))/4
    over velocity spectra.  Both are nonnegative up to quadrature error
    for runs from rest; a kicked start shifts both by the same offset.
    """
    if delta is None:
        delta = trace.params.delta
    lam = ndt_symbol(np.arange(1, trace.n + 1), delta)
    G = _velocity_spectra(trace)
    spectral = 0.25 * float(np.sum(lam * (G[-1] ** 2 - G[0] ** 2)))
    return float(trace.interaction_cum[-1]), spectral


def interaction_series(trace: SimulationTrace,
                       delta: Optional[float] = None):
    """Cumulative coupling work at every sample time.

    Returns (ts, direct, spectral, initial_offset, abs_scale) where
    initial_offset = sum(lam * gamma(0)^2)/4 restores positivity of
    direct + offset for arbitrary starting states, and abs_scale is the
    final absolute-integrand integral for relative thresholds.
    """
    if delta is None:
        delta = trace.params.delta
    lam = ndt_symbol(np.arange(1, trace.n + 1), delta)
    G = _velocity_spectra(trace)
    spec = 0.25 * np.sum(lam * (G ** 2 - G[0] ** 2), axis=1)
    offset = 0.25 * float(np.sum(lam * G[0] ** 2))
    return (trace.ts, trace.interaction_cum.copy(), spec, offset,
            float(trace.interaction_abs_cum[-1]))


def _check_aligned(a: SimulationTrace, b: SimulationTrace):
    if a.ts.shape != b.ts.shape or not np.allclose(a.ts, b.ts):
        raise ValueError("traces must share the sampling times")
    if a.n != b.n:
        raise ValueError("traces must share the membrane grid")


def model_error_norms(full: SimulationTrace, reduced: SimulationTrace,
                      fields: Optional[Sequence[str]] = None,
                      nz: int = 65) -> dict:
    """Time-integrated squared error norms between a chamber run and its
    depth-averaged limit.

    The chamber pressure is reconstructed from the sampled acceleration
    spectrum; the slab norms integrate over nz depth layers with
    trapezoid weights.  Returns {name: squared norm} for the keys in
    NORM_KEYS (or the requested subset).
    """
    _check_aligned(full, reduced)
    if full.params.delta <= 0:
        raise ValueError("first trace must come from a chamber run (delta > 0)")
    keys = tuple(fields) if fields is not None else NORM_KEYS
    unknown = set(keys) - set(NORM_KEYS)
    if unknown:
        raise ValueError(f"unknown norm fields: {sorted(unknown)}")

    n = full.n
    delta = full.params.delta
    x = full.x
    h = 1.0 / (n + 1)
    modes = np.arange(1, n + 1)
    lam0 = 1.0 / (modes * np.pi) ** 2
    K = len(full.ts)

    # acceleration spectra and depth-averaged bottom pressure of the full run
    B = dst(full.accel, type=1, axis=1) / (n + 1)
    line = full.f_vals[:, None] * (1.0 - x)[None, :]
    p_avg = line + dst(B * lam0[None, :], type=1, axis=1) / 2.0
    p1 = reduced.p_bottom

    series = {k: np.zeros(K) for k in keys}

    d_avg = p_avg - p1
    if "bottom_pressure" in series:
        series["bottom_pressure"] = h * np.sum(d_avg ** 2, axis=1)
    if "deflection" in series:
        series["deflection"] = h * np.sum((full.v - reduced.v) ** 2, axis=1)
    if "bottom_pressure_x" in series:
        # the difference vanishes at both walls, so zero-padded centering
        pad = np.zeros((K, 1))
        ext = np.concatenate([pad, d_avg, pad], axis=1)
        ddx = (ext[:, 2:] - ext[:, :-2]) / (2.0 * h)
        series["bottom_pressure_x"] = h * np.sum(ddx ** 2, axis=1)
    if "velocity" in series:
        series["velocity"] = h * np.sum((full.vdot - reduced.vdot) ** 2, axis=1)
    if "bottom_vs_average" in series:
        series["bottom_vs_average"] = h * np.sum(
            (full.p_bottom - p_avg) ** 2, axis=1)

    slab_keys = {"slab_pressure", "slab_vs_average"} & set(keys)
    if slab_keys:
        z = np.linspace(0.0, 1.0, nz)
        wz = np.full(nz, 1.0 / (nz - 1))
        wz[0] *= 0.5
        wz[-1] *= 0.5
        a = modes * np.pi * delta
        ratio = _depth_ratio(a, z)                         # (n, nz)
        coef_base = delta / (modes * np.pi)
        chunk = 256
        for s in range(0, K, chunk):
            e = min(s + chunk, K)
            co = (B[s:e, :] * coef_base[None, :])          # (c, n)
            # per-sample (n, nz) coefficient stacks -> pressure values
            stack = co[:, :, None] * ratio[None, :, :]
            pres = dst(stack, type=1, axis=1) / 2.0
            pres += line[s:e, :, None]
            if "slab_pressure" in series:
                diff = pres - p1[s:e, :, None]
                series["slab_pressure"][s:e] = h * np.einsum(
                    "cjl,l->c", diff ** 2, wz)
            if "slab_vs_average" in series:
                diff = pres - p_avg[s:e, :, None]
                series["slab_vs_average"][s:e] = h * np.einsum(
                    "cjl,l->c", diff ** 2, wz)

    return {k: float(np.trapezoid(series[k], full.ts)) for k in keys}


@dataclass
class OrderFit:
    slope: float
    intercept: float
    rms_residual: float
    npairs: int


def fit_convergence_order(pairs) -> OrderFit:
    """Least-squares slope of log(value) against log(parameter).

    Needs at least three strictly positive pairs; the rms log-space
    residual reports how straight the fit line is.
    """
    arr = np.asarray(list(pairs), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or arr.shape[0] < 3:
        raise ValueError("need at least three (parameter, value) pairs")
    if np.any(arr <= 0):
        raise ValueError("convergence fit needs positive parameters and values")
    lx = np.log(arr[:, 0])
    ly = np.log(arr[:, 1])
    A = np.column_stack([lx, np.ones_like(lx)])
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    return OrderFit(slope=float(coef[0]), intercept=float(coef[1]),
                    rms_residual=float(np.sqrt(np.mean(resid ** 2))),
                    npairs=arr.shape[0])


@dataclass
class EnvelopeSummary:
    x: np.ndarray
    envelope: np.ndarray
    peak_locations: np.ndarray     # sorted by height, tallest first
    peak_heights: np.ndarray
    dip: float                     # relative valley between the two tallest


def envelope_and_peaks(trace: SimulationTrace,
                       window: Optional[float] = None) -> EnvelopeSummary:
    """Deflection envelope over the trailing window plus its local maxima.

    Peaks are strict 3-point maxima with plateau centers; the dip is
    (lower - valley)/lower between the two tallest peaks (0 when there
    are fewer than two peaks, i.e. no separation).
    """
    if window is None:
        window = trace.grid.snapshot_window
    t_end = trace.ts[-1]
    mask = trace.ts >= t_end - window - 1e-12
    if not np.any(mask):
        raise ValueError("snapshot window contains no samples")
    env = np.max(np.abs(trace.v[mask]), axis=0)
    x = trace.x

    locs = []
    heights = []
    j = 1
    n = env.size
    while j < n - 1:
        if env[j] > env[j - 1]:
            jj = j
            while jj < n - 1 and env[jj + 1] == env[jj]:
                jj += 1
            if jj < n - 1 and env[jj + 1] < env[j]:
                mid = (j + jj) // 2
                locs.append(x[mid])
                heights.append(env[mid])
                j = jj + 1
                continue
            j = jj + 1
        else:
            j += 1
    locs = np.asarray(locs)
    heights = np.asarray(heights)
    order = np.argsort(heights)[::-1]
    locs = locs[order]
    heights = heights[order]

    dip = 0.0
    if len(locs) >= 2:
        xa, xb = sorted(locs[:2])
        sel = (x >= xa) & (x <= xb)
        valley = float(np.min(env[sel]))
        lower = float(min(heights[0], heights[1]))
        if lower > 0:
            dip = (lower - valley) / lower
    return EnvelopeSummary(x=x, envelope=env, peak_locations=locs,
                           peak_heights=heights, dip=dip)


def amplification_ratio(active: SimulationTrace, passive: SimulationTrace,
                        window: Optional[float] = None) -> float:
    """Peak envelope of the active run over the passive one."""
    ea = envelope_and_peaks(active, window)
    ep = envelope_and_peaks(passive, window)
    top = float(np.max(ea.envelope))
    bot = float(np.max(ep.envelope))
    if bot == 0.0:
        raise ValueError("passive envelope is identically zero")
    return top / bot


@dataclass
class OtoacousticMetric:
    trailing_rms: float
    transient_scale: float
    sustained_fraction: float


def otoacoustic_metric(trace: SimulationTrace,
                       early_window: float = 50.0) -> OtoacousticMetric:
    """Self-sustained activity of an unforced run.

    trailing_rms is the deflection RMS over the trailing snapshot window;
    transient_scale the largest per-sample RMS during the early window.
    A run that rings down has sustained_fraction near zero, a
    self-oscillating one stays order unity.
    """
    if any(abs(a) > 0 for a, _ in trace.params.forcing.tones):
        raise ValueError("emission metric expects an unforced run")
    wq = 1.0 / (trace.n + 1)
    rms_t = np.sqrt(wq * np.sum(trace.v ** 2, axis=1))
    t_end = trace.ts[-1]
    tail = trace.ts >= t_end - trace.grid.snapshot_window - 1e-12
    trailing = float(np.sqrt(np.mean(rms_t[tail] ** 2)))
    head = trace.ts <= early_window + 1e-12
    transient = float(np.max(rms_t[head])) if np.any(head) else 0.0
    frac = trailing / transient if transient > 0 else np.inf
    return OtoacousticMetric(trailing_rms=trailing,
                             transient_scale=transient,
                             sustained_fraction=frac)


def decay_rate(trace: SimulationTrace, t_start: float, t_end: float) -> float:
    """Fitted exponential rate of the energy-norm amplitude on [t_start, t_end]."""
    amp = np.sqrt(np.maximum(membrane_energy(trace), 1e-300))
    sel = (trace.ts >= t_start) & (trace.ts <= t_end)
    if np.count_nonzero(sel) < 3:
        raise ValueError("need at least three samples in the fit window")
    t = trace.ts[sel]
    y = np.log(amp[sel])
    A = np.column_stack([t, np.ones_like(t)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(-coef[0])
