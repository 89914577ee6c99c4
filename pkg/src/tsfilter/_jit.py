"""Compiled per-point kernels for the gyro-bias filter models.

The vectorized numpy evaluators in :mod:`tsfilter.propagation` are the
reference; these loops compute the same Ito drift and diffusion one point at
a time, which avoids the per-call overhead of many small array operations
inside the filter loop.
"""
from __future__ import annotations

import numpy as np
from numba import njit

from .rotation import _SERIES, _SERIES_SWITCH

_KEYS = ("A", "B", "C", "E", "F", "H", "dB", "dC", "dE", "dF", "dH")
_TABLE = np.array([_SERIES[k][:21] for k in _KEYS])


@njit(cache=True)
def _horner(c, x):
    out = c[-1]
    for i in range(c.shape[0] - 2, -1, -1):
        out = out * x + c[i]
    return out


@njit(cache=True)
def _coefficients(x, table, switch):
    out = np.empty(11)
    if x < switch:
        for i in range(11):
            out[i] = _horner(table[i], x)
        return out
    t = np.sqrt(x)
    s, c = np.sin(t), np.cos(t)
    A = s / t
    B = (1.0 - c) / x
    C = (1.0 - A) / x
    F = (A - 2.0 * B) / x
    H = (2.0 - 3.0 * A + c) / (x * x)
    half = 0.5 * t
    k = half * np.cos(half) / np.sin(half)
    E = (1.0 - k) / x
    dA = (c - A) / (2.0 * x)
    dB = (0.5 * A - B) / x
    dk = (0.5 * np.cos(half) / np.sin(half) - 0.25 * t / np.sin(half) ** 2) / (2.0 * t)
    out[0], out[1], out[2], out[3], out[4], out[5] = A, B, C, E, F, H
    out[6] = dB
    out[7] = (-dA - C) / x
    out[8] = (-dk - E) / x
    out[9] = (dA - 2.0 * dB - F) / x
    out[10] = (-3.0 * dA - 0.5 * A - 2.0 * x * H) / (x * x)
    return out


@njit(cache=True)
def _skew(v, out):
    out[0, 0] = 0.0
    out[1, 1] = 0.0
    out[2, 2] = 0.0
    out[0, 1] = -v[2]
    out[0, 2] = v[1]
    out[1, 0] = v[2]
    out[1, 2] = -v[0]
    out[2, 0] = -v[1]
    out[2, 1] = v[0]


@njit(cache=True)
def _mm(a, b, out):
    for i in range(3):
        for j in range(3):
            out[i, j] = a[i, 0] * b[0, j] + a[i, 1] * b[1, j] + a[i, 2] * b[2, j]


@njit(cache=True)
def _mv(a, v, out):
    for i in range(3):
        out[i] = a[i, 0] * v[0] + a[i, 1] * v[1] + a[i, 2] * v[2]


@njit(cache=True)
def _mtv(a, v, out):
    for i in range(3):
        out[i] = a[0, i] * v[0] + a[1, i] * v[1] + a[2, i] * v[2]


@njit(cache=True)
def _cross(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@njit(cache=True)
def _cross_trace(V, out):
    out[0] = V[1, 2] - V[2, 1]
    out[1] = V[2, 0] - V[0, 2]
    out[2] = V[0, 1] - V[1, 0]


@njit(cache=True)
def _sym_contract(a, V, out):
    # a tr(V) + V a - 2 V^T a
    tr = V[0, 0] + V[1, 1] + V[2, 2]
    for i in range(3):
        out[i] = (a[i] * tr + V[i, 0] * a[0] + V[i, 1] * a[1] + V[i, 2] * a[2]
                  - 2.0 * (V[0, i] * a[0] + V[1, i] * a[1] + V[2, i] * a[2]))


@njit(cache=True)
def _t_dw(V, delta, D2, E, dE, out):
    ct = np.empty(3)
    sc = np.empty(3)
    vt = np.empty(3)
    w = np.empty(3)
    _cross_trace(V, ct)
    _sym_contract(delta, V, sc)
    _mtv(V, delta, vt)
    _mv(D2, vt, w)
    for i in range(3):
        out[i] = -0.5 * ct[i] + 2.0 * dE * w[i] + E * sc[i]


@njit(cache=True)
def _so3_blocks(delta, cf, D, D2, W):
    x = delta[0] ** 2 + delta[1] ** 2 + delta[2] ** 2
    _skew(delta, D)
    for i in range(3):
        for j in range(3):
            D2[i, j] = delta[i] * delta[j] - (x if i == j else 0.0)
            W[i, j] = (1.0 if i == j else 0.0) - 0.5 * D[i, j] + cf[3] * D2[i, j]


@njit(cache=True)
def gyrobias_se3_ito(xi, omega, beta_hat, Q, table, switch, f_out, G_out):
    """Ito drift and diffusion of the semidirect-law gyro-bias model, per point."""
    D = np.empty((3, 3))
    D2 = np.empty((3, 3))
    W = np.empty((3, 3))
    U = np.empty((3, 3))
    UDDU = np.empty((3, 3))
    R = np.empty((3, 3))
    J = np.empty((3, 3))
    N = np.empty((3, 3))
    M1 = np.empty((3, 3))
    M2 = np.empty((3, 3))
    WN = np.empty((3, 3))
    WNW = np.empty((3, 3))
    Mj = np.empty((3, 3))
    Bt = np.empty((3, 3))
    T1 = np.empty((3, 3))
    T2 = np.empty((3, 3))
    V = np.empty((3, 3))
    dbt = np.empty((3, 6))
    G = np.empty((6, 6))
    GQ = np.empty((6, 6))
    Wa = np.empty((6, 3))
    v = np.empty(3)
    bt = np.empty(3)
    Du = np.empty(3)
    D2u = np.empty(3)
    Ta = np.empty(3)
    s1 = np.empty(3)
    s2 = np.empty(3)
    s3 = np.empty(3)
    tmp = np.empty(3)
    col = np.empty(3)
    lower = np.empty(3)
    for n in range(xi.shape[0]):
        delta = xi[n, :3]
        u = xi[n, 3:]
        om = omega[n]
        bh = beta_hat[n]
        x = delta[0] ** 2 + delta[1] ** 2 + delta[2] ** 2
        cf = _coefficients(x, table, switch)
        A, B, C, E, F, H = cf[0], cf[1], cf[2], cf[3], cf[4], cf[5]
        dB, dC, dE, dF, dH = cf[6], cf[7], cf[8], cf[9], cf[10]
        p = delta[0] * u[0] + delta[1] * u[1] + delta[2] * u[2]
        _so3_blocks(delta, cf, D, D2, W)
        _skew(u, U)
        for i in range(3):
            for j in range(3):
                e = 1.0 if i == j else 0.0
                UDDU[i, j] = delta[i] * u[j] + u[i] * delta[j] - 2.0 * p * e
                R[i, j] = e + A * D[i, j] + B * D2[i, j]
                J[i, j] = e - B * D[i, j] + C * D2[i, j]
                M2[i, j] = F * D[i, j] - H * D2[i, j]
                N[i, j] = B * U[i, j] + C * UDDU[i, j] + p * M2[i, j]
                M1[i, j] = dB * U[i, j] + dC * UDDU[i, j] + p * (dF * D[i, j] - dH * D2[i, j])
        _mm(W, N, WN)
        _mm(WN, W, WNW)

        _mv(J, u, v)
        for i in range(3):
            v[i] += bh[i]
        _mv(R, v, bt)
        _cross(delta, u, Du)
        _cross(delta, Du, D2u)
        for i in range(3):
            ci = 2.0 * (-dB * Du[i] + dC * D2u[i] - C * u[i])
            for j in range(3):
                Mj[i, j] = (ci * delta[j] + B * U[i, j]
                            + C * (delta[i] * u[j] + (p if i == j else 0.0)))
        # dbt = [-R [v]x J + R Mj, R J]
        _skew(v, T1)
        _mm(T1, J, T2)
        for i in range(3):
            for j in range(3):
                V[i, j] = Mj[i, j] - T2[i, j]
        _mm(R, V, T1)
        _mm(R, J, T2)
        for i in range(3):
            for j in range(3):
                dbt[i, j] = T1[i, j]
                dbt[i, 3 + j] = T2[i, j]
        _skew(bt, Bt)

        _mm(W, Bt, T1)
        for i in range(3):
            for j in range(3):
                G[i, j] = -W[i, j]
                G[i, 3 + j] = 0.0
                G[3 + i, j] = WNW[i, j] - T1[i, j]
                G[3 + i, 3 + j] = W[i, j]
        for i in range(6):
            for j in range(6):
                acc = 0.0
                for k in range(6):
                    acc += G[i, k] * Q[k, j]
                GQ[i, j] = acc
                G_out[n, i, j] = G[i, j]

        # rows a_j = GQ[j, :3]; c_j = GQ[j, 3:] for j < 3
        for i in range(3):
            for j in range(3):
                V[i, j] = GQ[i, j]
        _t_dw(V, delta, D2, E, dE, Ta)
        for j in range(6):
            _mv(W, GQ[j, :3], tmp)
            for i in range(3):
                Wa[j, i] = tmp[i]

        # t_dN_delta over rows Wa[:3]
        for i in range(3):
            for j in range(3):
                V[i, j] = Wa[i, j]
        _mtv(V, delta, tmp)
        _mv(M1, tmp, s1)
        _mtv(V, u, tmp)
        _mv(M2, tmp, s2)
        for i in range(3):
            s1[i] = 2.0 * s1[i] + s2[i]
        _sym_contract(u, V, s2)
        _cross_trace(V, s3)
        _sym_contract(delta, V, tmp)
        for i in range(3):
            s1[i] += C * s2[i] + p * F * s3[i] - p * H * tmp[i]
        # t_dN_u over rows Wa[3:]
        for i in range(3):
            for j in range(3):
                V[i, j] = Wa[3 + i, j]
        _cross_trace(V, s2)
        _sym_contract(delta, V, s3)
        _mtv(V, delta, tmp)
        _mv(M2, tmp, col)
        for i in range(3):
            s1[i] += B * s2[i] + C * s3[i] + col[i]
        # sum_j dbt[:, j] x a_j
        for i in range(3):
            s2[i] = 0.0
        for j in range(6):
            for i in range(3):
                col[i] = dbt[i, j]
            _cross(col, GQ[j, :3], tmp)
            for i in range(3):
                s2[i] += tmp[i]
        for i in range(3):
            s1[i] -= s2[i]
        _mv(W, s1, lower)
        # t_dW(N W a - Bt a + c) over j < 3
        for j in range(3):
            _mv(N, Wa[j], tmp)
            _cross(bt, GQ[j, :3], s2)
            for i in range(3):
                V[j, i] = tmp[i] - s2[i] + GQ[j, 3 + i]
        _t_dw(V, delta, D2, E, dE, tmp)
        _mv(WN, Ta, s2)
        for i in range(3):
            lower[i] += tmp[i] + s2[i]

        # drift
        for i in range(3):
            s1[i] = bh[i] - bt[i]
        _cross(om, s1, tmp)
        _mv(W, tmp, s2)
        _mv(WNW, s1, s3)
        _mv(W, s1, tmp)
        for i in range(3):
            y1 = om[i] - bh[i]
            col[i] = y1
        _cross(om, bh, Du)          # y2 = -omega x beta_hat
        _cross(delta, col, D2u)     # delta x y1
        for i in range(3):
            f_out[n, i] = tmp[i] - D2u[i] - 0.5 * Ta[i]
        _cross(u, col, D2u)         # u x y1
        _cross(delta, Du, col)      # delta x (omega x beta_hat) = -(delta x y2)
        for i in range(3):
            f_out[n, 3 + i] = s2[i] - s3[i] - D2u[i] + col[i] + 0.5 * lower[i]


@njit(cache=True)
def gyrobias_dp_ito(xi, omega, beta_hat, Q, table, switch, f_out, G_out):
    """Ito drift and diffusion of the direct-product gyro-bias model, per point."""
    D = np.empty((3, 3))
    D2 = np.empty((3, 3))
    W = np.empty((3, 3))
    V = np.empty((3, 3))
    r = np.empty(3)
    rd = np.empty(3)
    Wu = np.empty(3)
    Ta = np.empty(3)
    for n in range(xi.shape[0]):
        delta = xi[n, :3]
        u = xi[n, 3:]
        x = delta[0] ** 2 + delta[1] ** 2 + delta[2] ** 2
        cf = _coefficients(x, table, switch)
        _so3_blocks(delta, cf, D, D2, W)
        for i in range(6):
            for j in range(6):
                G_out[n, i, j] = 0.0
        for i in range(3):
            G_out[n, 3 + i, 3 + i] = 1.0
            for j in range(3):
                G_out[n, i, j] = -W[i, j]
        # rows a_j = (G Q)[j, :3] for j < 3; only the rotation block of G varies
        for i in range(3):
            for j in range(3):
                acc = 0.0
                for k in range(3):
                    acc -= W[i, k] * Q[k, j]
                V[i, j] = acc
        _t_dw(V, delta, D2, cf[3], cf[8], Ta)
        for i in range(3):
            r[i] = omega[n, i] - beta_hat[n, i]
        _cross(r, delta, rd)
        _mv(W, u, Wu)
        for i in range(3):
            f_out[n, i] = rd[i] - Wu[i] - 0.5 * Ta[i]
            f_out[n, 3 + i] = 0.0


def evaluate(kernel, xi, omega, beta_hat, Q):
    """Flatten the batch, run ``kernel`` and restore the shapes."""
    shape = xi.shape[:-1]
    flat = np.ascontiguousarray(xi.reshape(-1, 6))
    om = np.ascontiguousarray(np.broadcast_to(omega, shape + (3,)).reshape(-1, 3))
    bh = np.ascontiguousarray(np.broadcast_to(beta_hat, shape + (3,)).reshape(-1, 3))
    f = np.empty_like(flat)
    G = np.empty((flat.shape[0], 6, 6))
    kernel(flat, om, bh, np.ascontiguousarray(Q, dtype=float), _TABLE, _SERIES_SWITCH, f, G)
    return f.reshape(shape + (6,)), G.reshape(shape + (6, 6))
