"""Finite-difference reference solves.

Independent discretizations used to cross-check the spectral engine: a
banded solve for the reduced acceleration, a sparse 5-point solve for the
chamber Laplace problem, and two couplings of the full problem to the
membrane line (relaxed fixed point and one bordered sparse system) that
must agree with each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cholesky_banded, cho_solve_banded
from scipy.sparse import csc_matrix
from scipy.sparse.linalg import splu

from .model import MembraneState, ModelParams, forcing_at, nonlin_eval
from .solver import get_engine

_reduced_cache: dict = {}
_laplace_cache: dict = {}
_bordered_cache: dict = {}


def _reduced_factor(n: int, m: float):
    """Cholesky factor of I + m*A, A = tridiag(-1, 2, -1)/h^2 (SPD)."""
    key = (n, m)
    fac = _reduced_cache.get(key)
    if fac is None:
        h = 1.0 / (n + 1)
        ab = np.zeros((2, n))
        ab[0, 1:] = -m / h ** 2
        ab[1, :] = 1.0 + 2.0 * m / h ** 2
        fac = cholesky_banded(ab)
        _reduced_cache[key] = fac
    return fac


def fd_reduced_accel_solve(state: MembraneState, t: float,
                           p: ModelParams) -> np.ndarray:
    """Acceleration of the reduced model via a second-order banded solve.

    Eliminating the line pressure from p'' = -vddot with p(0) = f(t),
    p(1) = 0 gives (I + m A) vddot = A rhs with A the Dirichlet stiffness
    matrix; the forcing enters through the same rhs as the spectral
    engine because A applied to f*(1-x) reproduces the boundary term.
    """
    n = state.v.size
    eng = get_engine(p, n)
    v = np.asarray(state.v, float)
    w = np.asarray(state.vdot, float)
    rhs = (-p.r * w - eng.k_arr * v
           + nonlin_eval(p.nonlinearity, w, rho=eng.rho_arr)
           - forcing_at(p.forcing, t) * eng.one_minus_x)
    h = 1.0 / (n + 1)
    # matrix action of A on the full rhs: the -f*(1-x) part reproduces the
    # pressure boundary term exactly, so no separate correction is needed
    Arhs = (-np.concatenate(([0.0], rhs[:-1])) + 2.0 * rhs
            - np.concatenate((rhs[1:], [0.0]))) / h ** 2
    return cho_solve_banded((_reduced_factor(n, p.m), False), Arhs)


@dataclass
class Laplace2DProblem:
    """Chamber pressure problem on (0,1)^2 with interior-x unknowns.

    g_bottom is the prescribed normal derivative p_z(x, 0), i.e.
    -delta^2 * vddot on the coupled problem.  Sides carry p = f_val at
    x=0 and p = 0 at x=1; the top is a rigid lid (p_z = 0).
    """

    n: int
    nz: int
    delta: float
    f_val: float
    g_bottom: np.ndarray

    def __post_init__(self):
        if self.n < 1 or self.nz < 2:
            raise ValueError("need n >= 1 and nz >= 2")
        if self.delta <= 0:
            raise ValueError("the 2-D chamber needs delta > 0")
        g = np.asarray(self.g_bottom, dtype=float)
        if g.shape != (self.n,):
            raise ValueError("g_bottom must have shape (n,)")
        self.g_bottom = g


def _laplace_lu(n: int, nz: int, delta: float):
    key = (n, nz, delta)
    lu = _laplace_cache.get(key)
    if lu is not None:
        return lu
    hx = 1.0 / (n + 1)
    hz = 1.0 / (nz - 1)
    d2 = delta * delta
    cx = d2 / hx ** 2
    cz = 1.0 / hz ** 2

    def idx(i, l):
        return i * nz + l

    rows = []; cols = []; vals = []
    for i in range(n):
        for l in range(nz):
            me = idx(i, l)
            diag = -2.0 * cx - 2.0 * cz
            rows.append(me); cols.append(me); vals.append(diag)
            if i > 0:
                rows.append(me); cols.append(idx(i - 1, l)); vals.append(cx)
            if i < n - 1:
                rows.append(me); cols.append(idx(i + 1, l)); vals.append(cx)
            if l == 0:
                # ghost: p_{i,-1} = p_{i,1} - 2 hz g_i
                rows.append(me); cols.append(idx(i, 1)); vals.append(2.0 * cz)
            elif l == nz - 1:
                # ghost: p_{i,nz} = p_{i,nz-2}
                rows.append(me); cols.append(idx(i, nz - 2)); vals.append(2.0 * cz)
            else:
                rows.append(me); cols.append(idx(i, l - 1)); vals.append(cz)
                rows.append(me); cols.append(idx(i, l + 1)); vals.append(cz)
    A = csc_matrix((vals, (rows, cols)), shape=(n * nz, n * nz))
    lu = splu(A)
    _laplace_cache[key] = lu
    return lu


def fd_full_pressure_solve(prob: Laplace2DProblem) -> np.ndarray:
    """Second-order 5-point solve of the scaled chamber equation.

    Returns p on the interior-x / all-z grid with shape (n, nz); the
    Neumann faces use centered ghost elimination."""
    n, nz = prob.n, prob.nz
    hx = 1.0 / (n + 1)
    hz = 1.0 / (nz - 1)
    d2 = prob.delta ** 2
    cx = d2 / hx ** 2
    rhs = np.zeros((n, nz))
    rhs[:, 0] = 2.0 * prob.g_bottom / hz
    rhs[0, :] -= cx * prob.f_val
    lu = _laplace_lu(n, nz, prob.delta)
    return lu.solve(rhs.ravel()).reshape(n, nz)


def _bordered_lu(n: int, nz: int, delta: float, m: float):
    key = (n, nz, delta, m)
    lu = _bordered_cache.get(key)
    if lu is not None:
        return lu
    hx = 1.0 / (n + 1)
    hz = 1.0 / (nz - 1)
    d2 = delta * delta
    cx = d2 / hx ** 2
    cz = 1.0 / hz ** 2
    N = n * nz

    def idx(i, l):
        return i * nz + l

    rows = []; cols = []; vals = []
    for i in range(n):
        for l in range(nz):
            me = idx(i, l)
            rows.append(me); cols.append(me); vals.append(-2.0 * cx - 2.0 * cz)
            if i > 0:
                rows.append(me); cols.append(idx(i - 1, l)); vals.append(cx)
            if i < n - 1:
                rows.append(me); cols.append(idx(i + 1, l)); vals.append(cx)
            if l == 0:
                rows.append(me); cols.append(idx(i, 1)); vals.append(2.0 * cz)
                # bottom flux ties to the unknown acceleration:
                # rhs_bottom = -2 d2 vddot_i / hz moved to the left side
                rows.append(me); cols.append(N + i); vals.append(2.0 * d2 / hz)
            elif l == nz - 1:
                rows.append(me); cols.append(idx(i, nz - 2)); vals.append(2.0 * cz)
            else:
                rows.append(me); cols.append(idx(i, l - 1)); vals.append(cz)
                rows.append(me); cols.append(idx(i, l + 1)); vals.append(cz)
        # membrane line: m vddot_i + p(x_i, 0) = rhs0_i
        rows.append(N + i); cols.append(N + i); vals.append(m)
        rows.append(N + i); cols.append(idx(i, 0)); vals.append(1.0)
    A = csc_matrix((vals, (rows, cols)), shape=(N + n, N + n))
    lu = splu(A)
    _bordered_cache[key] = lu
    return lu


def fd_full_coupled_accel_solve(state: MembraneState, t: float,
                                p: ModelParams, nz: int = 65,
                                method: str = "bordered",
                                return_pressure: bool = False):
    """Acceleration of the full model by direct 2-D coupling.

    method="bordered" solves pressure and acceleration as one sparse
    system; method="fixedpoint" iterates the chamber solve against the
    membrane line with damping theta=0.5.  The forcing enters only
    through the x=0 side condition here, unlike the spectral engine's
    equivalent line term.
    """
    if p.delta <= 0:
        raise ValueError("full coupled solve needs delta > 0; "
                         "use fd_reduced_accel_solve for the limit model")
    n = state.v.size
    eng = get_engine(p, n)
    v = np.asarray(state.v, float)
    w = np.asarray(state.vdot, float)
    f_val = forcing_at(p.forcing, t)
    rhs0 = (-p.r * w - eng.k_arr * v
            + nonlin_eval(p.nonlinearity, w, rho=eng.rho_arr))

    if method == "bordered":
        N = n * nz
        hx = 1.0 / (n + 1)
        hz = 1.0 / (nz - 1)
        cx = p.delta ** 2 / hx ** 2
        b = np.zeros(N + n)
        side = np.zeros((n, nz))
        side[0, :] = -cx * f_val
        b[:N] = side.ravel()
        b[N:] = rhs0
        sol = _bordered_lu(n, nz, p.delta, p.m).solve(b)
        accel = sol[N:]
        if return_pressure:
            return accel, sol[:N].reshape(n, nz)
        return accel

    if method != "fixedpoint":
        raise ValueError("method must be 'bordered' or 'fixedpoint'")

    theta = 0.5
    accel = eng.acceleration(v, w, t)      # close initial guess
    history = []
    best = np.inf
    pres = None
    for it in range(200):
        prob = Laplace2DProblem(n=n, nz=nz, delta=p.delta, f_val=f_val,
                                g_bottom=-p.delta ** 2 * accel)
        pres = fd_full_pressure_solve(prob)
        target = (rhs0 - pres[:, 0]) / p.m
        res = float(np.max(np.abs(target - accel)))
        history.append(res)
        accel = accel + theta * (target - accel)
        scale = max(float(np.max(np.abs(accel))), 1.0)
        if res <= 1e-10 * scale:
            if return_pressure:
                return accel, pres
            return accel
        best = min(best, res)
        if res > 5.0 * best and it > 10:
            raise RuntimeError(
                f"fixed-point coupling diverged (theta={theta}); "
                f"residual history tail {history[-5:]}")
    raise RuntimeError(
        f"fixed-point coupling did not reach tolerance in 200 iterations; "
        f"last residual {history[-1]:.3e}")


def clear_caches():
    _reduced_cache.clear()
    _laplace_cache.clear()
    _bordered_cache.clear()
