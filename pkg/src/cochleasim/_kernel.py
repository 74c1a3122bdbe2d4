"""Optional numba fast path for the inner time loop.

The solver falls back to a pure numpy loop with identical semantics when
numba is unavailable; `solver` tests pin the two paths against each other.
All state lives in locals, so compiled calls are safe to run concurrently
from a thread pool (nogil).
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:          # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap

KIND_PASSIVE = 0
KIND_EXP = 1
KIND_TANH = 2


@njit(cache=True, nogil=True)
def rk4_run(M, k, one_minus_x, rho, c, kind, m, r, amps, omegas, ramp,
            v0, w0, dt, nsteps, sample_every):
    """Classical RK4 on (v, vdot) with the precomputed acceleration solve M.

    Samples every ``sample_every`` steps plus the final step; accumulates
    the friction, fluid-work, active-input and interaction integrals with
    per-step trapezoid quadrature.  Returns the sample arrays, the four
    accumulators and the step index at which the state went non-finite
    (-1 when the run stayed stable).
    """
    n = v0.size
    extra = 1 if nsteps % sample_every != 0 else 0
    K = nsteps // sample_every + 1 + extra
    ts = np.zeros(K)
    V = np.zeros((K, n))
    W = np.zeros((K, n))
    A = np.zeros((K, n))
    P = np.zeros((K, n))
    F = np.zeros(K)
    Iq = np.zeros(K)
    Iabs = np.zeros(K)

    v = v0.copy()
    w = w0.copy()
    rhs = np.empty(n)
    Nw = np.empty(n)
    p = np.empty(n)
    wq = 1.0 / (n + 1)
    h2 = dt / 2.0
    acc_fric = 0.0
    acc_work = 0.0
    acc_act = 0.0
    acc_q = 0.0
    acc_qa = 0.0
    g0p = 0.0; g1p = 0.0; g2p = 0.0; g3p = 0.0; g4p = 0.0
    ks = 0

    for i in range(nsteps + 1):
        t = i * dt
        ft = 0.0
        for ia in range(amps.size):
            ft += amps[ia] * np.cos(omegas[ia] * t)
        if ramp > 0.0 and t < ramp:
            ft *= 0.5 - 0.5 * np.cos(np.pi * t / ramp)

        for j in range(n):
            s = w[j]
            if kind == KIND_PASSIVE:
                Ns = 0.0
            elif kind == KIND_EXP:
                Ns = rho[j] * s * np.exp(-c * abs(s))
            else:
                Ns = np.tanh(rho[j] * s)
            Nw[j] = Ns
            rhs[j] = -r * s - k[j] * v[j] + Ns - ft * one_minus_x[j]
        a1 = M @ rhs

        g0 = 0.0; g1 = 0.0; g2 = 0.0; g3 = 0.0; g4 = 0.0
        for j in range(n):
            pj = Nw[j] - m * a1[j] - r * w[j] - k[j] * v[j]
            p[j] = pj
            qj = pj - ft * one_minus_x[j]
            g0 += w[j] * w[j]
            g1 += pj * w[j]
            g2 += w[j] * Nw[j]
            g3 += qj * w[j]
            g4 += abs(qj * w[j])
        g0 *= r * wq; g1 *= wq; g2 *= wq; g3 *= wq; g4 *= wq
        if i > 0:
            acc_fric += h2 * (g0p + g0)
            acc_work += h2 * (g1p + g1)
            acc_act += h2 * (g2p + g2)
            acc_q += h2 * (g3p + g3)
            acc_qa += h2 * (g4p + g4)
        g0p = g0; g1p = g1; g2p = g2; g3p = g3; g4p = g4

        if i % sample_every == 0 or i == nsteps:
            ts[ks] = t
            F[ks] = ft
            Iq[ks] = acc_q
            Iabs[ks] = acc_qa
            for j in range(n):
                V[ks, j] = v[j]
                W[ks, j] = w[j]
                A[ks, j] = a1[j]
                P[ks, j] = p[j]
            ks += 1
        if i == nsteps:
            break

        # stage 2
        th = t + h2
        ft2 = 0.0
        for ia in range(amps.size):
            ft2 += amps[ia] * np.cos(omegas[ia] * th)
        if ramp > 0.0 and th < ramp:
            ft2 *= 0.5 - 0.5 * np.cos(np.pi * th / ramp)
        for j in range(n):
            s = w[j] + h2 * a1[j]
            if kind == KIND_PASSIVE:
                Ns = 0.0
            elif kind == KIND_EXP:
                Ns = rho[j] * s * np.exp(-c * abs(s))
            else:
                Ns = np.tanh(rho[j] * s)
            rhs[j] = -r * s - k[j] * (v[j] + h2 * w[j]) + Ns - ft2 * one_minus_x[j]
        a2 = M @ rhs

        # stage 3 shares the midpoint forcing value
        for j in range(n):
            s = w[j] + h2 * a2[j]
            if kind == KIND_PASSIVE:
                Ns = 0.0
            elif kind == KIND_EXP:
                Ns = rho[j] * s * np.exp(-c * abs(s))
            else:
                Ns = np.tanh(rho[j] * s)
            rhs[j] = -r * s - k[j] * (v[j] + h2 * (w[j] + h2 * a1[j])) + Ns - ft2 * one_minus_x[j]
        a3 = M @ rhs

        # stage 4
        tf = t + dt
        ft4 = 0.0
        for ia in range(amps.size):
            ft4 += amps[ia] * np.cos(omegas[ia] * tf)
        if ramp > 0.0 and tf < ramp:
            ft4 *= 0.5 - 0.5 * np.cos(np.pi * tf / ramp)
        for j in range(n):
            s = w[j] + dt * a3[j]
            if kind == KIND_PASSIVE:
                Ns = 0.0
            elif kind == KIND_EXP:
                Ns = rho[j] * s * np.exp(-c * abs(s))
            else:
                Ns = np.tanh(rho[j] * s)
            rhs[j] = -r * s - k[j] * (v[j] + dt * (w[j] + h2 * a2[j])) + Ns - ft4 * one_minus_x[j]
        a4 = M @ rhs

        bad = False
        for j in range(n):
            w2 = w[j] + h2 * a1[j]
            w3 = w[j] + h2 * a2[j]
            w4 = w[j] + dt * a3[j]
            v[j] = v[j] + dt / 6.0 * (w[j] + 2.0 * w2 + 2.0 * w3 + w4)
            w[j] = w[j] + dt / 6.0 * (a1[j] + 2.0 * a2[j] + 2.0 * a3[j] + a4[j])
            if not np.isfinite(w[j]):
                bad = True
        if bad:
            return (ts[:ks], V[:ks], W[:ks], A[:ks], P[:ks], F[:ks],
                    Iq[:ks], Iabs[:ks], acc_fric, acc_work, acc_act, i + 1)

    return ts, V, W, A, P, F, Iq, Iabs, acc_fric, acc_work, acc_act, -1
