"""Time integration of the membrane ODE system and closed-form oracles.

The spectral engine eliminates the chamber pressure through the
nonlocal-to-local symbol, so each acceleration solve is one dense
matrix-vector product.  A numba kernel handles the hot loop when
available; the numpy fallback is semantically identical and the test
suite pins the two against each other.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_banded

from . import _kernel
from .model import (
    Grid,
    MembraneState,
    ModelParams,
    PASSIVE,
    EXP_RAYLEIGH,
    TANH_RAYLEIGH,
    effective_rho,
    forcing_at,
    nonlin_eval,
    stiffness_at,
    validate_params,
)
from .spectral import dst_forward, dst_inverse, interior_nodes, ndt_symbol

USE_KERNEL = _kernel.HAVE_NUMBA

_KIND_CODE = {PASSIVE: _kernel.KIND_PASSIVE,
              EXP_RAYLEIGH: _kernel.KIND_EXP,
              TANH_RAYLEIGH: _kernel.KIND_TANH}


class InstabilityError(RuntimeError):
    """Raised when the state goes non-finite during integration."""

    def __init__(self, t: float, dt: float, vmax: float):
        self.t = t
        self.dt = dt
        self.vmax = vmax
        super().__init__(
            f"solution became non-finite near t={t:.6g} (dt={dt:g}, "
            f"last finite max|vdot|={vmax:.3g}); reduce dt or the active gain")


@dataclass
class SimulationTrace:
    """Sampled solution history plus running energy integrals.

    Arrays are indexed (sample, node).  The interaction integrals are the
    cumulative fluid-coupling work and its absolute-value companion used
    for relative positivity checks.  The three scalar totals accumulate
    over the full run regardless of the sampling cadence.
    """

    digest: str
    params: ModelParams
    grid: Grid
    engine: str
    sample_every: int
    ts: np.ndarray
    v: np.ndarray
    vdot: np.ndarray
    accel: np.ndarray
    p_bottom: np.ndarray
    f_vals: np.ndarray
    interaction_cum: np.ndarray
    interaction_abs_cum: np.ndarray
    friction_dissipation: float
    fluid_work: float
    active_input: float
    initial_energy: float

    @property
    def n(self) -> int:
        return self.v.shape[1]

    @property
    def x(self) -> np.ndarray:
        return interior_nodes(self.n)

    def state_at(self, i: int) -> MembraneState:
        return MembraneState(t=float(self.ts[i]), v=self.v[i].copy(),
                             vdot=self.vdot[i].copy())

    def final_state(self) -> MembraneState:
        return self.state_at(len(self.ts) - 1)


def trace_digest(p: ModelParams, g: Grid, sample_every: int, engine: str) -> str:
    blob = json.dumps({"params": asdict(p), "grid": asdict(g),
                       "sample_every": sample_every, "engine": engine},
                      sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


class SpectralEngine:
    """Precomputed acceleration solve for one (params, n) pair.

    The implicit system (m + Lambda) vddot = rhs diagonalizes in the
    discrete sine basis; M folds transform, symbol division and inverse
    transform into a single dense matrix.
    """

    def __init__(self, p: ModelParams, n: int):
        report = validate_params(p, n=n)
        if not report.ok:
            raise ValueError("invalid model parameters: " + "; ".join(report.errors))
        self.params = p
        self.n = n
        self.x = interior_nodes(n)
        self.k_arr = stiffness_at(p.stiffness, self.x)
        self.lam = ndt_symbol(np.arange(1, n + 1), p.delta)
        self.one_minus_x = 1.0 - self.x
        rho = effective_rho(p, n)
        self.rho_arr = np.zeros(n) if rho is None else rho
        jk = np.outer(np.arange(1, n + 1), np.arange(1, n + 1))
        S = np.sin(jk * (np.pi / (n + 1)))
        self.M = (2.0 / (n + 1)) * (S @ (S / (p.m + self.lam)[:, None]))

    def acceleration(self, v: np.ndarray, vdot: np.ndarray, t: float) -> np.ndarray:
        p = self.params
        rhs = (-p.r * vdot - self.k_arr * v
               + nonlin_eval(p.nonlinearity, vdot, rho=self.rho_arr)
               - forcing_at(p.forcing, t) * self.one_minus_x)
        return self.M @ rhs

    def acceleration_spectral(self, v, vdot, t):
        """Transform-based variant of the same solve (cross-check path)."""
        p = self.params
        rhs = (-p.r * vdot - self.k_arr * v
               + nonlin_eval(p.nonlinearity, vdot, rho=self.rho_arr)
               - forcing_at(p.forcing, t) * self.one_minus_x)
        return dst_inverse(dst_forward(rhs) / (p.m + self.lam))

    def run(self, g: Grid, sample_every: int = 1,
            initial_state: Optional[MembraneState] = None,
            use_kernel: Optional[bool] = None) -> SimulationTrace:
        if sample_every < 1:
            raise ValueError("sample_every must be >= 1")
        if use_kernel is None:
            use_kernel = USE_KERNEL
        p = self.params
        n = self.n
        if initial_state is None:
            v0 = np.zeros(n)
            w0 = np.zeros(n)
        else:
            if initial_state.v.size != n or initial_state.vdot.size != n:
                raise ValueError("initial state size does not match grid")
            v0 = np.asarray(initial_state.v, dtype=float).copy()
            w0 = np.asarray(initial_state.vdot, dtype=float).copy()
        nsteps = int(round(g.t_final / g.dt))
        amps = np.array([a for a, _ in p.forcing.tones], dtype=float)
        omegas = np.array([w for _, w in p.forcing.tones], dtype=float)
        c = p.nonlinearity.c if p.nonlinearity.c is not None else 0.0

        if use_kernel:
            out = _kernel.rk4_run(self.M, self.k_arr, self.one_minus_x,
                                  self.rho_arr, float(c),
                                  _KIND_CODE[p.nonlinearity.kind],
                                  float(p.m), float(p.r), amps, omegas,
                                  float(p.forcing.ramp_time),
                                  v0, w0, float(g.dt), nsteps, sample_every)
            (ts, V, W, A, P, F, Iq, Iabs, fric, work, act, badstep) = out
            if badstep >= 0:
                wlast = W[-1] if len(W) else w0
                raise InstabilityError(badstep * g.dt, g.dt,
                                       float(np.max(np.abs(wlast))))
        else:
            out = _numpy_rk4_run(self, g.dt, nsteps, sample_every, v0, w0,
                                 accel_fn=None)
            (ts, V, W, A, P, F, Iq, Iabs, fric, work, act) = out

        wq = 1.0 / (n + 1)
        e0 = 0.5 * wq * float(np.sum(p.m * w0 ** 2 + self.k_arr * v0 ** 2))
        return SimulationTrace(
            digest=trace_digest(p, g, sample_every, "spectral"),
            params=p, grid=g, engine="spectral", sample_every=sample_every,
            ts=ts, v=V, vdot=W, accel=A, p_bottom=P, f_vals=F,
            interaction_cum=Iq, interaction_abs_cum=Iabs,
            friction_dissipation=float(fric), fluid_work=float(work),
            active_input=float(act), initial_energy=e0)


def _numpy_rk4_run(engine: SpectralEngine, dt: float, nsteps: int,
                   sample_every: int, v0: np.ndarray, w0: np.ndarray,
                   accel_fn: Optional[Callable] = None):
    """Reference loop; bit-compatible with the numba kernel when accel_fn
    is None (same operation order within float tolerance expectations).

    accel_fn(v, vdot, t) overrides the acceleration solve, which lets the
    finite-difference engines reuse the sampling and bookkeeping."""
    p = engine.params
    n = engine.n
    k = engine.k_arr
    rho = engine.rho_arr
    one_minus_x = engine.one_minus_x
    nl = p.nonlinearity
    m, r = p.m, p.r
    wq = 1.0 / (n + 1)
    h2 = dt / 2.0

    if accel_fn is None:
        M = engine.M

        def accel(v, w, t, ft, Ns):
            return M @ (-r * w - k * v + Ns - ft * one_minus_x)
    else:
        def accel(v, w, t, ft, Ns):
            return accel_fn(v, w, t)

    extra = 1 if nsteps % sample_every != 0 else 0
    K = nsteps // sample_every + 1 + extra
    ts = np.zeros(K)
    V = np.zeros((K, n)); W = np.zeros((K, n))
    A = np.zeros((K, n)); P = np.zeros((K, n))
    F = np.zeros(K); Iq = np.zeros(K); Iabs = np.zeros(K)

    v = v0.copy(); w = w0.copy()
    acc = np.zeros(5)     # fric, work, act, q, |q|
    gp = np.zeros(5)
    ks = 0
    for i in range(nsteps + 1):
        t = i * dt
        ft = forcing_at(p.forcing, t)
        Nw = nonlin_eval(nl, w, rho=rho)
        a1 = accel(v, w, t, ft, Nw)
        pb = Nw - m * a1 - r * w - k * v
        q = pb - ft * one_minus_x
        g = np.array([r * np.sum(w * w), np.sum(pb * w), np.sum(w * Nw),
                      np.sum(q * w), np.sum(np.abs(q * w))]) * wq
        if i > 0:
            acc += h2 * (gp + g)
        gp = g
        if i % sample_every == 0 or i == nsteps:
            ts[ks] = t; F[ks] = ft
            Iq[ks] = acc[3]; Iabs[ks] = acc[4]
            V[ks] = v; W[ks] = w; A[ks] = a1; P[ks] = pb
            ks += 1
        if i == nsteps:
            break

        th = t + h2
        ft2 = forcing_at(p.forcing, th)
        w2 = w + h2 * a1
        a2 = accel(v + h2 * w, w2, th, ft2, nonlin_eval(nl, w2, rho=rho))
        w3 = w + h2 * a2
        a3 = accel(v + h2 * w2, w3, th, ft2, nonlin_eval(nl, w3, rho=rho))
        tf = t + dt
        ft4 = forcing_at(p.forcing, tf)
        w4 = w + dt * a3
        a4 = accel(v + dt * w2, w4, tf, ft4, nonlin_eval(nl, w4, rho=rho))

        v = v + dt / 6.0 * (w + 2.0 * w2 + 2.0 * w3 + w4)
        w = w + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
        if not np.all(np.isfinite(w)):
            raise InstabilityError((i + 1) * dt, dt,
                                   float(np.max(np.abs(W[ks - 1]))) if ks else 0.0)

    return ts, V, W, A, P, F, Iq, Iabs, acc[0], acc[1], acc[2]


_engine_cache: dict = {}


def get_engine(p: ModelParams, n: int) -> SpectralEngine:
    key = (p, n)
    eng = _engine_cache.get(key)
    if eng is None:
        if len(_engine_cache) > 32:
            _engine_cache.clear()
        eng = SpectralEngine(p, n)
        _engine_cache[key] = eng
    return eng


def acceleration_solve(state: MembraneState, t: float, p: ModelParams) -> np.ndarray:
    """Membrane acceleration under the chamber pressure at time t."""
    eng = get_engine(p, state.v.size)
    return eng.acceleration(np.asarray(state.v, float),
                            np.asarray(state.vdot, float), t)


def rk4_step(accel, t: float, v: np.ndarray, w: np.ndarray, dt: float):
    """One classical RK4 step for v' = w, w' = accel(v, w, t)."""
    h2 = dt / 2.0
    a1 = accel(v, w, t)
    w2 = w + h2 * a1
    a2 = accel(v + h2 * w, w2, t + h2)
    w3 = w + h2 * a2
    a3 = accel(v + h2 * w2, w3, t + h2)
    w4 = w + dt * a3
    a4 = accel(v + dt * w2, w4, t + dt)
    vn = v + dt / 6.0 * (w + 2.0 * w2 + 2.0 * w3 + w4)
    wn = w + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4)
    return vn, wn


def step(state: MembraneState, t: float, dt: float, p: ModelParams) -> MembraneState:
    """Advance one RK4 step; raises InstabilityError on non-finite output."""
    eng = get_engine(p, state.v.size)
    v = np.asarray(state.v, float)
    w = np.asarray(state.vdot, float)
    vn, wn = rk4_step(eng.acceleration, t, v, w, dt)
    if not np.all(np.isfinite(wn)):
        raise InstabilityError(t + dt, dt, float(np.max(np.abs(w))))
    return MembraneState(t=t + dt, v=vn, vdot=wn)


def simulate(p: ModelParams, g: Grid, sample_every: int = 1,
             initial_state: Optional[MembraneState] = None,
             use_kernel: Optional[bool] = None) -> SimulationTrace:
    """Integrate from rest (or a given state) over [0, t_final]."""
    return get_engine(p, g.n).run(g, sample_every=sample_every,
                                  initial_state=initial_state,
                                  use_kernel=use_kernel)


def run_with_accel(p: ModelParams, g: Grid, accel_fn: Callable,
                   sample_every: int = 1,
                   initial_state: Optional[MembraneState] = None,
                   engine_name: str = "fd") -> SimulationTrace:
    """Same loop and bookkeeping as simulate() with an external
    acceleration solve (finite-difference engines)."""
    eng = get_engine(p, g.n)
    if initial_state is None:
        v0 = np.zeros(g.n); w0 = np.zeros(g.n)
    else:
        v0 = np.asarray(initial_state.v, float).copy()
        w0 = np.asarray(initial_state.vdot, float).copy()
    nsteps = int(round(g.t_final / g.dt))
    out = _numpy_rk4_run(eng, g.dt, nsteps, sample_every, v0, w0,
                         accel_fn=accel_fn)
    (ts, V, W, A, P, F, Iq, Iabs, fric, work, act) = out
    wq = 1.0 / (g.n + 1)
    e0 = 0.5 * wq * float(np.sum(p.m * w0 ** 2 + eng.k_arr * v0 ** 2))
    return SimulationTrace(
        digest=trace_digest(p, g, sample_every, engine_name),
        params=p, grid=g, engine=engine_name, sample_every=sample_every,
        ts=ts, v=V, vdot=W, accel=A, p_bottom=P, f_vals=F,
        interaction_cum=Iq, interaction_abs_cum=Iabs,
        friction_dissipation=float(fric), fluid_work=float(work),
        active_input=float(act), initial_energy=e0)


def damped_oscillator_closed_form(m: float, r: float, k: float, p0: float,
                                  t: np.ndarray):
    """Exact solution of m v'' + r v' + k v = -p0 from rest.

    Returns (v, vdot) evaluated at the times in t; handles the
    underdamped, critically damped and overdamped regimes.
    """
    t = np.asarray(t, dtype=float)
    if m <= 0 or k <= 0 or r < 0:
        raise ValueError("need m > 0, k > 0, r >= 0")
    vp = -p0 / k
    disc = r * r - 4.0 * m * k
    C = -vp                       # homogeneous part starts at -vp, slope 0
    if abs(disc) <= 1e-12 * 4.0 * m * k:
        s = -r / (2.0 * m)
        D = -s * C
        e = np.exp(s * t)
        vh = (C + D * t) * e
        wh = (D + s * (C + D * t)) * e
    elif disc < 0:
        sig = -r / (2.0 * m)
        wd = np.sqrt(-disc) / (2.0 * m)
        D = -sig * C / wd
        e = np.exp(sig * t)
        cw = np.cos(wd * t); sw = np.sin(wd * t)
        vh = e * (C * cw + D * sw)
        wh = e * ((sig * C + wd * D) * cw + (sig * D - wd * C) * sw)
    else:
        root = np.sqrt(disc)
        s1 = (-r + root) / (2.0 * m)
        s2 = (-r - root) / (2.0 * m)
        ca = -s2 * C / (s1 - s2)
        cb = s1 * C / (s1 - s2)
        e1 = np.exp(s1 * t); e2 = np.exp(s2 * t)
        vh = ca * e1 + cb * e2
        wh = ca * s1 * e1 + cb * s2 * e2
    return vp + vh, wh


@dataclass
class PassiveSteadyState:
    """Frequency-domain response of the passive reduced model."""

    x: np.ndarray
    omegas: np.ndarray
    amplitudes: tuple    # complex velocity amplitude per tone, each (n,)
    envelope: np.ndarray
    commensurate: bool = field(default=True)


def _gcd_pair(a: float, b: float, tol: float) -> float:
    a, b = abs(a), abs(b)
    while b > tol:
        a, b = b, a % b
    return a


def passive_steady_state_oracle(p: ModelParams, g: Grid) -> PassiveSteadyState:
    """Per-tone boundary-value solve for the passive reduced model.

    Each tone obeys P'' + (omega^2/d) P = 0 with P(0) = amp, P(1) = 0 and
    d = k - m omega^2 + i r omega; the velocity amplitude is V = -P/d.
    The envelope is the pointwise sup of the combined response, sampled
    over the common period when the tones are commensurate and bounded by
    the amplitude sum otherwise.
    """
    if p.nonlinearity.kind != PASSIVE:
        raise ValueError("steady-state oracle only covers the passive model")
    if p.delta != 0:
        raise ValueError("steady-state oracle is for the reduced (delta=0) model")
    n = g.n
    x = interior_nodes(n)
    k = stiffness_at(p.stiffness, x)
    h = 1.0 / (n + 1)
    m, r = p.m, p.r

    amps = []
    omegas = []
    for a, om in p.forcing.tones:
        d = k - m * om * om + 1j * r * om
        ab = np.zeros((3, n), dtype=complex)
        ab[0, 1:] = 1.0
        ab[1, :] = -2.0 + h * h * om * om / d
        ab[2, :-1] = 1.0
        rhs = np.zeros(n, dtype=complex)
        rhs[0] = -a
        P = solve_banded((1, 1), ab, rhs)
        amps.append(-P / d)
        omegas.append(om)
    omegas = np.asarray(omegas)

    if len(amps) == 1:
        env = np.abs(amps[0])
        comm = True
    else:
        tol = 1e-9 * float(np.max(omegas))
        gc = omegas[0]
        for om in omegas[1:]:
            gc = _gcd_pair(gc, om, tol)
        if gc > 1e-6 * float(np.max(omegas)):
            T0 = 2.0 * np.pi / gc
            tgrid = np.linspace(0.0, T0, 8192, endpoint=False)
            sig = np.zeros((tgrid.size, n))
            for V, om in zip(amps, omegas):
                sig += np.real(V[None, :] * np.exp(1j * om * tgrid)[:, None])
            env = np.max(np.abs(sig), axis=0)
            comm = True
        else:
            env = np.sum([np.abs(V) for V in amps], axis=0)
            comm = False

    return PassiveSteadyState(x=x, omegas=omegas, amplitudes=tuple(amps),
                              envelope=env, commensurate=comm)
