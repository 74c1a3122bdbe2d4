"""Integrator semantics: engine paths, stepping API, oscillator oracle,
steady-state frequency solve."""

from dataclasses import replace

import numpy as np
import pytest

from cochleasim import presets
from cochleasim.model import (
    EXP_RAYLEIGH,
    Forcing,
    Grid,
    MembraneState,
    ModelParams,
    Nonlinearity,
    PASSIVE,
    StiffnessProfile,
    TANH_RAYLEIGH,
)
from cochleasim.solver import (
    InstabilityError,
    SpectralEngine,
    acceleration_solve,
    damped_oscillator_closed_form,
    passive_steady_state_oracle,
    rk4_step,
    simulate,
    step,
)

SHORT = Grid(n=32, nz=17, dt=1e-3, t_final=2.0, snapshot_window=1.0)


def make_params(kind=PASSIVE, rho=0.0, c=None, tones=((0.1, 2.0),), r=0.3):
    return ModelParams(m=1.0, r=r, stiffness=StiffnessProfile(400.0, 9.6),
                       nonlinearity=Nonlinearity(kind=kind, rho=rho, c=c),
                       forcing=Forcing(tones=tones, ramp_time=0.5),
                       delta=0.0)


@pytest.mark.parametrize("kind,rho,c", [
    (PASSIVE, 0.0, None),
    (EXP_RAYLEIGH, 0.25, 0.05),
    (TANH_RAYLEIGH, 0.25, None),
])
def test_kernel_and_numpy_paths_agree(kind, rho, c):
    p = make_params(kind=kind, rho=rho, c=c)
    t1 = simulate(p, SHORT, sample_every=7, use_kernel=True)
    t2 = simulate(p, SHORT, sample_every=7, use_kernel=False)
    assert np.array_equal(t1.ts, t2.ts)
    assert t1.ts[-1] == SHORT.t_final      # final step always sampled
    # the two paths differ only by summation order; resonant modes
    # amplify that ulp-level noise over the 2000 steps, nothing more
    for f in ("v", "vdot", "accel", "p_bottom", "f_vals",
              "interaction_cum", "interaction_abs_cum"):
        a = getattr(t1, f)
        b = getattr(t2, f)
        assert np.max(np.abs(a - b)) < 1e-7, f
    assert abs(t1.friction_dissipation - t2.friction_dissipation) < 1e-10
    assert abs(t1.fluid_work - t2.fluid_work) < 1e-10
    assert abs(t1.active_input - t2.active_input) < 1e-10


def test_acceleration_solve_matches_transform_route():
    p = make_params(kind=EXP_RAYLEIGH, rho=0.2, c=0.05)
    p = replace(p, delta=0.15)
    eng = SpectralEngine(p, 64)
    rng = np.random.default_rng(2)
    v = rng.standard_normal(64) * 1e-3
    w = rng.standard_normal(64) * 1e-3
    a = eng.acceleration(v, w, 0.4)
    b = eng.acceleration_spectral(v, w, 0.4)
    assert np.max(np.abs(a - b)) < 1e-12
    # module-level entry point shares the cached engine
    st = MembraneState(0.4, v, w)
    assert np.array_equal(acceleration_solve(st, 0.4, p), a)


def test_acceleration_balances_forces():
    # (m + Lambda) vddot must reproduce the membrane rhs when transformed back
    p = make_params(kind=TANH_RAYLEIGH, rho=0.2)
    eng = SpectralEngine(p, 48)
    rng = np.random.default_rng(9)
    v = rng.standard_normal(48) * 1e-2
    w = rng.standard_normal(48) * 1e-2
    t = 1.3
    a = eng.acceleration(v, w, t)
    from cochleasim.model import forcing_at, nonlin_eval
    from cochleasim.spectral import dst_forward, dst_inverse
    rhs = (-p.r * w - eng.k_arr * v
           + nonlin_eval(p.nonlinearity, w, rho=eng.rho_arr)
           - forcing_at(p.forcing, t) * eng.one_minus_x)
    back = dst_inverse(dst_forward(a) * (p.m + eng.lam))
    assert np.max(np.abs(back - rhs)) < 1e-11


def test_step_advances_like_simulate():
    p = make_params()
    g = replace(SHORT, t_final=0.05, snapshot_window=0.05)
    tr = simulate(p, g, sample_every=1, use_kernel=False)
    st = MembraneState(0.0, np.zeros(32), np.zeros(32))
    for i in range(50):
        st = step(st, i * g.dt, g.dt, p)
    assert st.t == pytest.approx(0.05)
    assert np.max(np.abs(st.v - tr.v[-1])) < 1e-13
    assert np.max(np.abs(st.vdot - tr.vdot[-1])) < 1e-13


def test_simulate_rejects_bad_inputs():
    p = make_params()
    with pytest.raises(ValueError):
        simulate(p, SHORT, sample_every=0)
    bad = MembraneState(0.0, np.zeros(8), np.zeros(8))
    with pytest.raises(ValueError):
        simulate(p, SHORT, initial_state=bad)
    with pytest.raises(ValueError):
        SpectralEngine(make_params(r=-1.0), 8)


def test_instability_reported_with_context():
    # omega * dt ~ 22, far beyond the explicit stability limit of ~2.8
    p = ModelParams(m=1.0, r=0.1,
                    stiffness=StiffnessProfile(k0=2000.0, alpha=0.0),
                    nonlinearity=Nonlinearity(PASSIVE, 0.0, None),
                    forcing=Forcing(tones=((0.1, 2.0),), ramp_time=0.0),
                    delta=0.0)
    g = Grid(n=16, nz=5, dt=0.5, t_final=60.0, snapshot_window=1.0)
    for use_kernel in (True, False):
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(InstabilityError) as exc:
                simulate(p, g, use_kernel=use_kernel)
        assert exc.value.dt == 0.5
        assert 0.0 < exc.value.t <= 60.0


def test_interaction_accumulator_nonnegative_and_bounded():
    """The fluid does no net negative work on the membrane from rest."""
    p = make_params(kind=EXP_RAYLEIGH, rho=0.25, c=0.05,
                    tones=((0.1, 2.0), (0.08, 2.4)))
    for delta in (0.0, 0.3):
        tr = simulate(replace(p, delta=delta), SHORT, sample_every=5)
        scale = max(tr.interaction_abs_cum[-1], 1e-300)
        assert tr.interaction_cum.min() >= -1e-10 * scale
        assert np.all(tr.interaction_abs_cum >= np.abs(tr.interaction_cum)
                      - 1e-12 * scale)


def test_closed_form_oscillator_against_scipy():
    from scipy.integrate import solve_ivp
    p0 = 0.7
    for m, r, k in ((1.0, 0.3, 4.0), (1.0, 4.0, 4.0), (1.0, 6.0, 4.0),
                    (2.5, 1.0, 0.9)):
        t = np.linspace(0.0, 8.0, 33)
        v, w = damped_oscillator_closed_form(m, r, k, p0, t)
        sol = solve_ivp(lambda tt, y: [y[1], (-p0 - r * y[1] - k * y[0]) / m],
                        (0, 8.0), [0.0, 0.0], t_eval=t,
                        rtol=1e-11, atol=1e-13)
        assert np.max(np.abs(sol.y[0] - v)) < 1e-8, (m, r, k)
        assert np.max(np.abs(sol.y[1] - w)) < 1e-8, (m, r, k)
    # rest start and long-time equilibrium -p0/k
    v, w = damped_oscillator_closed_form(1.0, 0.5, 2.0, p0, np.array([0.0, 120.0]))
    assert v[0] == 0.0 and abs(w[0]) < 1e-15
    assert abs(v[1] + p0 / 2.0) < 1e-10


def test_rk4_single_mode_hits_closed_form():
    dt = 1e-3
    k = 9.0
    r = 0.4
    p0 = -0.3
    v = np.zeros(1)
    w = np.zeros(1)

    def accel(vv, ww, tt):
        return -p0 - r * ww - k * vv

    for i in range(int(round(4.0 / dt))):
        v, w = rk4_step(accel, i * dt, v, w, dt)
    ve, we = damped_oscillator_closed_form(1.0, r, k, p0, np.array([4.0]))
    assert abs(v[0] - ve[0]) < 1e-9
    assert abs(w[0] - we[0]) < 1e-9


def test_passive_steady_state_constant_stiffness_analytic():
    # constant k: P(x) = a sin(q (1 - x)) / sin(q), q^2 = omega^2 / d
    omega = 2.0
    a = 0.1
    p = ModelParams(m=1.0, r=0.5,
                    stiffness=StiffnessProfile(k0=9.0, alpha=0.0),
                    nonlinearity=Nonlinearity(PASSIVE, 0.0, None),
                    forcing=Forcing(tones=((a, omega),), ramp_time=0.0),
                    delta=0.0)
    g = Grid(n=256, nz=5, dt=1e-3, t_final=1.0, snapshot_window=0.5)
    ss = passive_steady_state_oracle(p, g)
    d = 9.0 - omega ** 2 + 1j * 0.5 * omega
    q = np.sqrt(omega ** 2 / d)
    x = ss.x
    P = a * np.sin(q * (1 - x)) / np.sin(q)
    V = -P / d
    assert np.max(np.abs(ss.amplitudes[0] - V)) < 2e-4 * np.max(np.abs(V))
    assert np.allclose(ss.envelope, np.abs(V), rtol=3e-4)


def test_passive_steady_state_limits():
    """Quasi-static and friction-dominated regimes have known shapes."""
    base = make_params(tones=((0.05, 1e-4),), r=0.3)
    g = Grid(n=128, nz=5, dt=1e-3, t_final=1.0, snapshot_window=0.5)
    ss = passive_steady_state_oracle(base, g)
    from cochleasim.model import stiffness_at
    k = stiffness_at(base.stiffness, ss.x)
    # omega -> 0: deflection tracks the line pressure, v = -f(1-x)/k
    want = 0.05 * (1 - ss.x) / k
    assert np.max(np.abs(ss.envelope - want)) < 1e-6 * np.max(want)

    # r >> k/omega: |V| ~ f(1-x)/(r omega)
    heavy = ModelParams(m=1.0, r=5e4, stiffness=base.stiffness,
                        nonlinearity=base.nonlinearity,
                        forcing=Forcing(tones=((0.05, 2.0),), ramp_time=0.0),
                        delta=0.0)
    ss = passive_steady_state_oracle(heavy, g)
    want = 0.05 * (1 - ss.x) / (5e4 * 2.0)
    assert np.max(np.abs(ss.envelope - want)) < 1e-3 * np.max(want)


def test_steady_state_oracle_guards():
    with pytest.raises(ValueError):
        passive_steady_state_oracle(
            make_params(kind=TANH_RAYLEIGH, rho=0.1), SHORT)
    with pytest.raises(ValueError):
        p = replace(make_params(), delta=0.2)
        passive_steady_state_oracle(p, SHORT)


def test_two_tone_envelope_commensurate_vs_sum_bound():
    p = make_params(tones=((0.1, 2.0), (0.08, 2.4)))
    g = Grid(n=64, nz=5, dt=1e-3, t_final=1.0, snapshot_window=0.5)
    ss = passive_steady_state_oracle(p, g)
    assert ss.commensurate
    amp_sum = np.abs(ss.amplitudes[0]) + np.abs(ss.amplitudes[1])
    assert np.all(ss.envelope <= amp_sum + 1e-12)
    assert np.max(ss.envelope / np.maximum(amp_sum, 1e-300)) > 0.9


def test_trace_bookkeeping():
    pre = presets.preset("fig1-active")
    g = replace(pre.grid, t_final=1.0, snapshot_window=0.5)
    tr = simulate(pre.params, g, sample_every=9)
    assert tr.ts[0] == 0.0 and tr.ts[-1] == 1.0
    assert tr.n == 128 and tr.engine == "spectral"
    assert tr.initial_energy == 0.0
    st = tr.final_state()
    assert st.t == 1.0
    assert np.array_equal(st.v, tr.v[-1])
    assert len(tr.digest) == 16
