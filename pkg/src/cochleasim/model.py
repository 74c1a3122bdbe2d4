"""Model data: parameters, stiffness profile, forcing, nonlinearity.

The membrane occupies the unit interval with deflection v(x, t) sampled on
interior nodes x_j = j/(n+1).  The chamber above it has aspect ratio delta;
delta = 0 selects the reduced one-dimensional pressure model.  Everything in
this module is an immutable value object plus pure pointwise evaluators, so
instances are safe to share across worker processes or threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

PASSIVE = "passive"
EXP_RAYLEIGH = "exp_rayleigh"
TANH_RAYLEIGH = "tanh_rayleigh"
NONLINEARITY_KINDS = (PASSIVE, EXP_RAYLEIGH, TANH_RAYLEIGH)


@dataclass(frozen=True)
class StiffnessProfile:
    """Exponentially graded membrane stiffness k(x) = k0 * exp(-alpha * x).

    Parameters
    ----------
    k0 : float
        Stiffness at the base x = 0.  Must be positive.
    alpha : float
        Exponential decay rate per unit length.  Nonnegative; alpha = 0
        gives a uniform membrane.
    """

    k0: float = 400.0
    alpha: float = 9.6


@dataclass(frozen=True)
class Nonlinearity:
    """Bounded velocity-dependent active force N(s).

    Supported kinds:

    * ``"passive"``       : N = 0.
    * ``"exp_rayleigh"``  : N(s) = rho * s * exp(-c |s|), bounded by rho/(c e).
    * ``"tanh_rayleigh"`` : N(s) = tanh(rho * s), bounded by 1.

    Both active forms are odd, vanish at s = 0, and satisfy
    sup |N'(s)| <= rho.  Stability of the coupled system requires the gain
    rho to stay strictly below the friction coefficient r; `validate_params`
    enforces that.
    """

    kind: str = PASSIVE
    rho: float = 0.0
    c: float = 0.0


@dataclass(frozen=True)
class Forcing:
    """Boundary pressure signal f(t) = sum_i a_i cos(omega_i t).

    ``tones`` is a sequence of (amplitude, angular frequency) pairs.  If
    ``ramp_time`` is positive the sum is multiplied by a C^1 cosine ramp
    rising smoothly from 0 to 1 over that duration.
    """

    tones: tuple = ()
    ramp_time: float = 0.0


@dataclass(frozen=True)
class RhoField:
    """Per-node random gain: rho_j ~ Normal(mean, std), clamped to >= 0.

    Sampling is reproducible from ``seed``.  Nodes where rho_j >= r have
    locally negative effective friction and can self-oscillate; this is the
    mechanism behind spontaneous emission runs, so such nodes are flagged by
    validation rather than rejected.
    """

    mean: float
    std: float
    seed: int


@dataclass(frozen=True)
class ModelParams:
    m: float = 1.0
    r: float = 0.3
    stiffness: StiffnessProfile = StiffnessProfile()
    nonlinearity: Nonlinearity = Nonlinearity()
    forcing: Forcing = Forcing()
    delta: float = 0.0
    rho_field: RhoField | None = None


@dataclass(frozen=True)
class Grid:
    """Discretization: n interior x-nodes, nz depth levels, time stepping.

    Interior nodes are x_j = j/(n+1) for j = 1..n; the endpoints carry
    boundary data only.  ``nz`` matters only when reconstructing the
    two-dimensional pressure field (delta > 0).  ``snapshot_window`` is the
    trailing time window used for envelope statistics.
    """

    n: int = 128
    nz: int = 65
    dt: float = 1e-3
    t_final: float = 200.0
    snapshot_window: float = 50.0

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("grid needs at least one interior node")
        if self.nz < 2:
            raise ValueError("field reconstruction needs nz >= 2 levels")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.t_final < self.dt:
            raise ValueError("t_final must be at least one step")
        if not 0.0 < self.snapshot_window <= self.t_final:
            raise ValueError("snapshot_window must lie in (0, t_final]")

    def nodes(self) -> np.ndarray:
        return np.arange(1, self.n + 1) / (self.n + 1)


@dataclass
class MembraneState:
    """Deflection and velocity on the interior nodes at one instant."""

    t: float
    v: np.ndarray
    vdot: np.ndarray


@dataclass
class ValidationReport:
    ok: bool
    errors: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    rho_exceeds_fraction: float = 0.0


def validate_params(p: ModelParams, n: int | None = None) -> ValidationReport:
    """Check every model invariant; never raises.

    Returns a report with hard failures in ``errors`` (m <= 0, r <= 0,
    delta < 0, scalar rho >= r, malformed nonlinearity) and advisories in
    ``warnings``.  When a random gain field is configured and ``n`` is
    given, the field is sampled and the fraction of nodes with
    rho_j >= r is reported in ``rho_exceeds_fraction``; locally exceeding
    the friction bound is allowed (it is how spontaneous emission arises)
    but always flagged.
    """
    errors: list = []
    warnings: list = []
    frac = 0.0

    if p.m <= 0.0:
        errors.append("membrane mass m must be positive")
    if p.r <= 0.0:
        errors.append("friction r must be positive")
    if p.delta < 0.0:
        errors.append("aspect ratio delta must be nonnegative")
    if p.stiffness.k0 <= 0.0:
        errors.append("stiffness amplitude k0 must be positive")
    if p.stiffness.alpha < 0.0:
        errors.append("stiffness decay alpha must be nonnegative")

    nl = p.nonlinearity
    if nl.kind not in NONLINEARITY_KINDS:
        errors.append(f"unknown nonlinearity kind {nl.kind!r}")
    elif nl.kind != PASSIVE:
        if nl.rho < 0.0:
            errors.append("active gain rho must be nonnegative")
        elif nl.rho >= p.r > 0.0:
            errors.append(
                f"active gain rho={nl.rho} must stay strictly below friction r={p.r}"
            )
        if nl.kind == EXP_RAYLEIGH and nl.c <= 0.0:
            errors.append("exp_rayleigh needs c > 0, otherwise the force is unbounded")

    if p.rho_field is not None:
        if nl.kind == PASSIVE:
            errors.append("rho_field requires an active nonlinearity kind")
        elif p.rho_field.std < 0.0:
            errors.append("rho_field std must be nonnegative")
        elif n is not None:
            rho = sample_rho_field(p.rho_field, n)
            frac = float(np.mean(rho >= p.r))
            if frac > 0.0:
                warnings.append(
                    f"{frac:.1%} of nodes have rho >= r (locally self-oscillating)"
                )

    if p.forcing.ramp_time < 0.0:
        errors.append("ramp_time must be nonnegative")
    for tone in p.forcing.tones:
        if len(tone) != 2:
            errors.append("each tone is an (amplitude, omega) pair")
            break

    if not p.forcing.tones and nl.kind == PASSIVE and p.rho_field is None:
        warnings.append("no forcing and no active term: solution is trivially zero")

    return ValidationReport(ok=not errors, errors=errors, warnings=warnings,
                            rho_exceeds_fraction=frac)


def stiffness_at(s: StiffnessProfile, x):
    """Evaluate k(x) = k0 * exp(-alpha * x); accepts scalars or arrays."""
    return s.k0 * np.exp(-s.alpha * np.asarray(x, dtype=float))


def forcing_at(f: Forcing, t):
    """Evaluate the boundary pressure f(t); accepts scalars or arrays."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    for amp, omega in f.tones:
        out = out + amp * np.cos(omega * t)
    if f.ramp_time > 0.0:
        ramp = np.where(t < f.ramp_time,
                        0.5 - 0.5 * np.cos(np.pi * np.minimum(t, f.ramp_time) / f.ramp_time),
                        1.0)
        out = out * ramp
    return out if out.ndim else float(out)


def nonlin_eval(nl: Nonlinearity, s, rho=None):
    """Active force N(s).  ``rho`` may override the scalar gain per node."""
    s = np.asarray(s, dtype=float)
    gain = nl.rho if rho is None else rho
    if nl.kind == PASSIVE:
        out = np.zeros_like(s)
    elif nl.kind == EXP_RAYLEIGH:
        out = gain * s * np.exp(-nl.c * np.abs(s))
    elif nl.kind == TANH_RAYLEIGH:
        out = np.tanh(gain * s)
    else:
        raise ValueError(f"unknown nonlinearity kind {nl.kind!r}")
    return out if out.ndim else float(out)

def nonlin_deriv(nl: Nonlinearity, s, rho=None):
    """Slope N'(s).

    For exp_rayleigh the |s| factor has a kink at s = 0 but the slope
    extends continuously with N'(0) = rho, which is the value returned.
    """
    s = np.asarray(s, dtype=float)
    gain = nl.rho if rho is None else rho
    if nl.kind == PASSIVE:
        out = np.zeros_like(s)
    elif nl.kind == EXP_RAYLEIGH:
        out = gain * np.exp(-nl.c * np.abs(s)) * (1.0 - nl.c * np.abs(s))
    elif nl.kind == TANH_RAYLEIGH:
        th = np.tanh(gain * s)
        out = gain * (1.0 - th * th)   # sech^2 without overflow at large |s|
    else:
        raise ValueError(f"unknown nonlinearity kind {nl.kind!r}")
    return out if out.ndim else float(out)


def nonlin_sup(nl: Nonlinearity) -> float:
    """Analytic bound sup_s |N(s)|."""
    if nl.kind == PASSIVE:
        return 0.0
    if nl.kind == EXP_RAYLEIGH:
        return nl.rho / (nl.c * np.e)
    return 1.0


def sample_rho_field(rf: RhoField, n: int) -> np.ndarray:
    """Draw the per-node gain vector; deterministic in (seed, n)."""
    rng = np.random.default_rng(rf.seed)
    return np.clip(rng.normal(rf.mean, rf.std, n), 0.0, None)


def effective_rho(p: ModelParams, n: int):
    """Per-node gain array, or the scalar gain when no field is set."""
    if p.rho_field is not None:
        return sample_rho_field(p.rho_field, n)
    return np.full(n, p.nonlinearity.rho)


def resonance_location(p: ModelParams, omega: float) -> float:
    """Position x* where the local natural frequency matches omega.

    Solves k(x*) = m * omega^2, i.e. x* = ln(k0 / (m omega^2)) / alpha.
    Raises ValueError when m * omega^2 falls outside the range of k on
    [0, 1] (the frequency maps outside the membrane).
    """
    s = p.stiffness
    target = p.m * omega * omega
    if s.alpha == 0.0:
        raise ValueError("frequency maps outside cochlea: constant stiffness "
                         "has no resonance map")
    k_lo, k_hi = sorted((s.k0, s.k0 * np.exp(-s.alpha)))
    if not k_lo <= target <= k_hi:
        raise ValueError(
            f"frequency maps outside cochlea: m*omega^2={target:g} "
            f"not in [{k_lo:g}, {k_hi:g}]")
    return float(np.log(s.k0 / target) / s.alpha)
