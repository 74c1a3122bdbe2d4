"""Parameter containers, validation, and the pointwise evaluators."""

import numpy as np
import pytest

from cochleasim.model import (
    EXP_RAYLEIGH,
    Forcing,
    Grid,
    ModelParams,
    Nonlinearity,
    PASSIVE,
    RhoField,
    StiffnessProfile,
    TANH_RAYLEIGH,
    effective_rho,
    forcing_at,
    nonlin_deriv,
    nonlin_eval,
    nonlin_sup,
    resonance_location,
    sample_rho_field,
    stiffness_at,
    validate_params,
)

EXP = Nonlinearity(kind=EXP_RAYLEIGH, rho=0.3, c=0.05)
TANH = Nonlinearity(kind=TANH_RAYLEIGH, rho=0.3, c=None)
NONE = Nonlinearity(kind=PASSIVE, rho=0.0, c=None)


def default_params(**kw):
    base = dict(m=1.0, r=0.3, stiffness=StiffnessProfile(400.0, 9.6),
                nonlinearity=NONE,
                forcing=Forcing(tones=((0.1, 2.0),), ramp_time=1.0),
                delta=0.0)
    base.update(kw)
    return ModelParams(**base)


def test_grid_rejects_bad_shapes():
    with pytest.raises(ValueError):
        Grid(n=0, nz=65, dt=1e-3, t_final=1.0, snapshot_window=0.5)
    with pytest.raises(ValueError):
        Grid(n=8, nz=1, dt=1e-3, t_final=1.0, snapshot_window=0.5)
    with pytest.raises(ValueError):
        Grid(n=8, nz=65, dt=0.0, t_final=1.0, snapshot_window=0.5)
    with pytest.raises(ValueError):
        Grid(n=8, nz=65, dt=1e-3, t_final=1.0, snapshot_window=2.0)


def test_validate_params_flags_errors_not_raises():
    p = default_params(m=-1.0, r=0.0)
    rep = validate_params(p)
    assert not rep.ok
    assert any("m" in e for e in rep.errors)
    assert any("r" in e for e in rep.errors)

    # scalar active gain at or above friction destabilizes the origin
    p = default_params(nonlinearity=Nonlinearity(EXP_RAYLEIGH, 0.3, 0.05))
    rep = validate_params(p)
    assert not rep.ok

    p = default_params(nonlinearity=Nonlinearity(EXP_RAYLEIGH, 0.29, 0.05))
    assert validate_params(p).ok


def test_validate_params_rho_field_rules():
    rf = RhoField(mean=0.285, std=0.15, seed=2026)
    p = default_params(nonlinearity=Nonlinearity(EXP_RAYLEIGH, 0.285, 0.05),
                       rho_field=rf)
    rep = validate_params(p, n=128)
    assert rep.ok
    assert 0.0 < rep.rho_exceeds_fraction < 1.0
    assert any("rho >= r" in w for w in rep.warnings)

    # a random gain profile makes no sense on the passive model
    rep = validate_params(default_params(rho_field=rf))
    assert not rep.ok


def test_trivial_run_warns():
    p = default_params(forcing=Forcing(tones=(), ramp_time=0.0))
    rep = validate_params(p)
    assert rep.ok
    assert any("trivial" in w for w in rep.warnings)


def test_stiffness_profile_decays_exponentially():
    prof = StiffnessProfile(k0=400.0, alpha=9.6)
    x = np.linspace(0.0, 1.0, 41)
    k = stiffness_at(prof, x)
    assert np.allclose(k, 400.0 * np.exp(-9.6 * x), rtol=1e-15)
    assert k[0] == 400.0


def test_forcing_ramp_is_smooth_and_reaches_full_amplitude():
    f = Forcing(tones=((0.1, 2.0), (0.08, 2.4)), ramp_time=10.0)
    assert forcing_at(f, 0.0) == 0.0
    full = 0.1 * np.cos(2.0 * 25.0) + 0.08 * np.cos(2.4 * 25.0)
    assert abs(forcing_at(f, 25.0) - full) < 1e-15
    # C^1 at the ramp start: slope ~ 0
    eps = 1e-6
    assert abs(forcing_at(f, eps) - forcing_at(f, 0.0)) < 1e-9


def test_nonlinearity_oddness_exact():
    s = np.linspace(-40.0, 40.0, 4001)
    for nl in (EXP, TANH):
        a = nonlin_eval(nl, s)
        b = nonlin_eval(nl, -s)
        assert np.array_equal(a, -b), nl.kind


def test_nonlinearity_bounds_sampled():
    rng = np.random.default_rng(11)
    s = np.concatenate([rng.uniform(-100, 100, 20000),
                        rng.uniform(-1e-3, 1e-3, 2000)])
    for nl in (EXP, TANH):
        sup = nonlin_sup(nl)
        assert np.all(np.abs(nonlin_eval(nl, s)) <= sup + 1e-12), nl.kind
        assert np.all(np.abs(nonlin_deriv(nl, s)) <= nl.rho + 1e-12), nl.kind
    assert nonlin_sup(NONE) == 0.0
    # exp kind peaks exactly at |s| = 1/c
    assert abs(abs(nonlin_eval(EXP, 1.0 / EXP.c)) - nonlin_sup(EXP)) < 1e-15


def test_nonlinearity_derivative_matches_finite_differences():
    rng = np.random.default_rng(3)
    s = rng.uniform(1e-3, 30.0, 5000) * rng.choice([-1.0, 1.0], 5000)
    h = 1e-6
    for nl in (EXP, TANH):
        fd = (nonlin_eval(nl, s + h) - nonlin_eval(nl, s - h)) / (2 * h)
        d = nonlin_deriv(nl, s)
        assert np.max(np.abs(fd - d)) < 1e-6, nl.kind


def test_small_signal_gain_is_rho():
    # N'(0) = rho for both bounded kinds; that sets the effective friction
    for nl in (EXP, TANH):
        assert abs(nonlin_deriv(nl, 0.0) - nl.rho) < 1e-15


def test_rho_field_sampling_deterministic_and_clipped():
    rf = RhoField(mean=0.05, std=0.2, seed=42)
    a = sample_rho_field(rf, 256)
    b = sample_rho_field(rf, 256)
    assert np.array_equal(a, b)
    assert np.all(a >= 0.0)
    assert sample_rho_field(RhoField(0.3, 0.0, 1), 8).tolist() == [0.3] * 8


def test_effective_rho_prefers_field():
    p = default_params(nonlinearity=Nonlinearity(EXP_RAYLEIGH, 0.2, 0.05))
    assert np.allclose(effective_rho(p, 16), 0.2)
    p = default_params(nonlinearity=Nonlinearity(EXP_RAYLEIGH, 0.2, 0.05),
                       rho_field=RhoField(0.4, 0.0, 5))
    assert np.allclose(effective_rho(p, 16), 0.4)
    assert np.all(effective_rho(default_params(), 16) == 0.0)


def test_resonance_location_round_trip():
    p = default_params()
    for omega in (2.0, 2.3, 2.4):
        xr = resonance_location(p, omega)
        k = stiffness_at(p.stiffness, np.array([xr]))[0]
        assert abs(k - p.m * omega ** 2) < 1e-10 * k
    with pytest.raises(ValueError):
        resonance_location(p, 1e-6)       # maps past the apex
    with pytest.raises(ValueError):
        resonance_location(p, 1e6)        # maps before the base
