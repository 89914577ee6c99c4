"""Tangent-space SDE models and their propagation.

Each model describes the error coordinates xi of g = exp(xi) mu as a
Stratonovich SDE  d xi = f(xi) dt + G(xi) o dw  with E[dw dw^T] = Q dt.
Moments are propagated by the continuous-time unscented transform after
the Ito drift correction.  Model parameters may carry leading batch axes
(one set per Monte-Carlo run); tangent arrays then have shape
(batch..., extra..., n).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import block_diag, expm

from .errors import StepReject
from .groups import ROTBIAS_DP, ROTBIAS_SE3, S3, SE3, SE23, RotBias
from .lie import int_exp, int_s_exp
from .rotation import (SKEW_BASIS, coefficients, cross, jbar_so3, jbar_so3_grad, n_matrix, n_matrix_grad, skew,
                       so3_exp, wbar_so3, wbar_so3_grad)
from . import _jit
from .ut import sigma_offsets, symmetrize, ut_weights


@dataclass(frozen=True)
class Moments:
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class SdeModel:
    name: str
    n: int
    m: int
    drift: Callable[[np.ndarray], np.ndarray]
    diffusion: Callable[[np.ndarray], np.ndarray]
    Q: np.ndarray
    params: dict = field(default_factory=dict)
    # d G_ik / d xi_j with shape (..., j, i, k); finite differences when absent
    diffusion_grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    # optional one-pass evaluation of (drift, diffusion, diffusion_grad)
    joint: Optional[Callable[[np.ndarray], tuple]] = None
    # optional direct evaluation of (Ito drift, diffusion) without the full gradient
    ito: Optional[Callable[[np.ndarray], tuple]] = None

    def evaluate(self, xi):
        """(f, G, dG) at xi, sharing work between the three when possible."""
        if self.joint is not None:
            return self.joint(xi)
        G = self.diffusion(xi)
        dG = self.diffusion_grad(xi) if self.diffusion_grad is not None else diffusion_grad_fd(self, xi)
        return self.drift(xi), G, dG

    def rot_norm(self, xi) -> np.ndarray:
        return np.linalg.norm(np.asarray(xi)[..., :3], axis=-1)


def _bcast(param: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Reshape a (batch..., k) parameter so it broadcasts against xi (batch..., extra..., n)."""
    extra = xi.ndim - param.ndim
    if param.ndim <= 1 or extra <= 0:
        return param
    return param.reshape(param.shape[:-1] + (1,) * extra + param.shape[-1:])


def _mv(M, v):
    return (M @ v[..., None])[..., 0]


# ---------------------------------------------------------------- SU(2)

def model_su2(omega, Q_eta) -> SdeModel:
    """Attitude error on the unit quaternions: d xi = -[w]x xi dt + (1/2) Wbar_s(xi) o d eta."""
    omega = np.asarray(omega, dtype=float)

    def drift(xi):
        xi = np.asarray(xi, dtype=float)
        return -cross(_bcast(omega, xi), xi)

    def diffusion(xi):
        return 0.5 * S3.wbar(xi)

    def grad(xi):
        # Wbar_s(xi) = wbar_so3(-2 xi)
        return -wbar_so3_grad(-2.0 * np.asarray(xi, dtype=float))

    return SdeModel("su2", 3, 3, drift, diffusion, np.asarray(Q_eta, dtype=float),
                    {"omega": omega}, grad)


# ---------------------------------------------------------------- SE(3), SE(2,3)

def model_se3(omega, v, Q_eta, Q_zeta) -> SdeModel:
    omega = np.asarray(omega, dtype=float)
    v = np.asarray(v, dtype=float)

    def drift(xi):
        xi = np.asarray(xi, dtype=float)
        y = np.concatenate([_bcast(omega, xi) + 0 * xi[..., :3], _bcast(v, xi) + 0 * xi[..., :3]], -1)
        return _mv(SE3.adbar(y), xi)

    return SdeModel("se3", 6, 6, drift, SE3.wbar, block_diag(Q_eta, Q_zeta),
                    {"omega": omega, "v": v})


def se23_drift_matrix(omega, a) -> np.ndarray:
    """[[w]x, 0, 0], [[a]x, [w]x, 0], [0, I, [w]x]]."""
    W = skew(omega)
    out = np.zeros(W.shape[:-2] + (9, 9))
    for b in range(3):
        out[..., 3 * b:3 * b + 3, 3 * b:3 * b + 3] = W
    out[..., 3:6, 0:3] = skew(a)
    out[..., 6:9, 3:6] = np.eye(3)
    return out


def model_se23(omega, a, Q_eta, Q_zeta) -> SdeModel:
    """Inertial navigation error on SE(2,3); gravity cancels from the error dynamics."""
    omega = np.asarray(omega, dtype=float)
    a = np.asarray(a, dtype=float)
    A = se23_drift_matrix(omega, a)

    def drift(xi):
        xi = np.asarray(xi, dtype=float)
        Ab = A if A.ndim == 2 else A.reshape(A.shape[:-2] + (1,) * (xi.ndim - A.ndim + 1) + (9, 9))
        return _mv(Ab, xi)

    def diffusion(xi):
        return -SE23.wbar(xi)[..., :, :6]

    return SdeModel("se23", 9, 6, drift, diffusion, block_diag(Q_eta, Q_zeta),
                    {"omega": omega, "a": a, "A": A})


# ---------------------------------------------------------------- gyro bias

def wbar_se3_grad(xi) -> np.ndarray:
    """d Wbar_se3 / d xi_j with shape (..., 6, 6, 6) indexed [j, row, col]."""
    xi = np.asarray(xi, dtype=float)
    delta, u = xi[..., :3], xi[..., 3:]
    W = wbar_so3(delta)[..., None, :, :]
    Wk = wbar_so3_grad(delta)
    N = n_matrix(delta, u)[..., None, :, :]
    dNd, dNu = n_matrix_grad(delta, u)
    out = np.zeros(xi.shape[:-1] + (6, 6, 6))
    out[..., :3, :3, :3] = Wk
    out[..., :3, 3:, 3:] = Wk
    out[..., :3, 3:, :3] = -(Wk @ N @ W + W @ dNd @ W + W @ N @ Wk)
    out[..., 3:, 3:, :3] = -(W @ dNu @ W)
    return out


def beta_tilde(xi, beta_hat) -> np.ndarray:
    """Bias of exp(xi) mu under the semidirect law: e^{[d]x}(beta_hat + jbar(d) u)."""
    xi = np.asarray(xi, dtype=float)
    delta, u = xi[..., :3], xi[..., 3:]
    return _mv(so3_exp(delta), beta_hat + _mv(jbar_so3(delta), u))


def beta_tilde_grad(xi, beta_hat) -> np.ndarray:
    """d beta_tilde_i / d xi_j with shape (..., 3, 6)."""
    xi = np.asarray(xi, dtype=float)
    delta, u = xi[..., :3], xi[..., 3:]
    R = so3_exp(delta)
    J = jbar_so3(delta)
    v = beta_hat + _mv(J, u)
    dJu = np.einsum("...kij,...j->...ik", jbar_so3_grad(delta), u)
    d_delta = -R @ skew(v) @ J + R @ dJu
    d_u = R @ J
    return np.concatenate([d_delta, d_u], -1)


def _sym_outer(a, b):
    """a b^T + b a^T."""
    return a[..., :, None] * b[..., None, :] + b[..., :, None] * a[..., None, :]


def _gyrobias_se3_joint(xi, omega, beta_hat):
    """Drift, diffusion and diffusion gradient of the semidirect-law model in one pass.

    Uses [a]x[b]x = b a^T - <a, b> I to keep everything as outer products,
    and the block structure of Wbar_se3 and of the noise map.
    """
    delta, u = xi[..., :3], xi[..., 3:]
    x = np.einsum("...i,...i->...", delta, delta)
    cf = coefficients(x, deriv=True)
    c2 = {k: v[..., None, None] for k, v in cf.items()}
    g = {k: v[..., None, None, None] for k, v in cf.items()}
    I3 = np.eye(3)
    p = np.einsum("...i,...i->...", delta, u)
    p2 = p[..., None, None]
    D = skew(delta)
    U = skew(u)
    D2 = delta[..., :, None] * delta[..., None, :] - x[..., None, None] * I3
    UD_DU = _sym_outer(delta, u) - 2.0 * p2 * I3
    R = I3 + c2["A"] * D + c2["B"] * D2
    J = I3 - c2["B"] * D + c2["C"] * D2
    W = I3 - 0.5 * D + c2["E"] * D2
    N = c2["B"] * U + c2["C"] * UD_DU + p2 * (c2["F"] * D - c2["H"] * D2)

    # [e_k]x D + D [e_k]x and the same with U, indexed [..., k, i, j]
    eye_k = I3[:, :, None]                        # e_k as a column, broadcast over i
    dk = delta[..., :, None, None]
    EKD = (delta[..., None, :, None] * I3[:, None, :] + eye_k * delta[..., None, None, :]
           - 2.0 * dk * I3)
    EKU = (u[..., None, :, None] * I3[:, None, :] + eye_k * u[..., None, None, :]
           - 2.0 * u[..., :, None, None] * I3)
    Dk = D[..., None, :, :]
    D2k = D2[..., None, :, :]
    dW = -0.5 * SKEW_BASIS + 2.0 * dk * g["dE"] * D2k + g["E"] * EKD
    M1 = c2["dB"] * U + c2["dC"] * UD_DU + p2 * (c2["dF"] * D - c2["dH"] * D2)
    M2 = c2["F"] * D - c2["H"] * D2
    dN = np.concatenate([
        2.0 * dk * M1[..., None, :, :] + u[..., :, None, None] * M2[..., None, :, :] + g["C"] * EKU
        + p2[..., None] * (g["F"] * SKEW_BASIS - g["H"] * EKD),
        g["B"] * SKEW_BASIS + g["C"] * EKD + dk * M2[..., None, :, :],
    ], axis=-3)                                   # [..., j, i, l] for j over (delta, u)

    # bias of exp(xi) mu and its gradient
    v = beta_hat + np.einsum("...ij,...j->...i", J, u)
    bt = np.einsum("...ij,...j->...i", R, v)
    Du = cross(delta, u)
    D2u = cross(delta, Du)
    Mj = (2.0 * (-c2["dB"][..., 0] * Du + c2["dC"][..., 0] * D2u - c2["C"][..., 0] * u)[..., :, None]
          * delta[..., None, :] + c2["B"] * U
          + c2["C"] * (delta[..., :, None] * u[..., None, :] + p2 * I3))   # (d_k J) u as column k
    dbt = np.concatenate([-R @ skew(v) @ J + R @ Mj, R @ J], -1)            # [..., i, j]

    # Wbar_se3 = [[W, 0], [-W N W, W]];  G = Wbar [[-I, 0], [-[bt]x, I]]
    WN = W @ N
    WNW = WN @ W
    Bt = skew(bt)
    G = np.zeros(xi.shape[:-1] + (6, 6))
    G[..., :3, :3] = -W
    G[..., 3:, :3] = WNW - W @ Bt
    G[..., 3:, 3:] = W
    Wk = W[..., None, :, :]
    dG = np.zeros(xi.shape[:-1] + (6, 6, 6))
    dG[..., :3, :3, :3] = -dW
    dG[..., :3, 3:, 3:] = dW
    dWNW = Wk @ dN @ Wk
    dWNW[..., :3, :, :] += dW @ (N @ W)[..., None, :, :] + WN[..., None, :, :] @ dW
    lower = dWNW - Wk @ skew(np.swapaxes(dbt, -1, -2))
    lower[..., :3, :, :] -= dW @ Bt[..., None, :, :]
    dG[..., 3:, :3] = lower

    # drift: -adbar(xi) y + Wbar z
    y1 = omega - beta_hat
    y2 = -cross(omega, beta_hat)
    ad_y = np.concatenate([cross(delta, y1), cross(u, y1) + cross(delta, y2)], -1)
    diff = beta_hat - bt
    zr = cross(omega, diff)
    f = np.concatenate([np.einsum("...ij,...j->...i", W, diff),
                        np.einsum("...ij,...j->...i", W, zr) - np.einsum("...ij,...j->...i", WNW, diff)], -1)
    return f - ad_y, G, dG


def _cross_trace(V):
    """sum_k e_k x V_k for the rows V_k of V."""
    return np.stack([V[..., 1, 2] - V[..., 2, 1], V[..., 2, 0] - V[..., 0, 2], V[..., 0, 1] - V[..., 1, 0]], -1)


def _sym_contract(a, V):
    """sum_k ([e_k]x [a]x + [a]x [e_k]x) V_k = a tr(V) + V a - 2 V^T a."""
    tr = np.trace(V, axis1=-2, axis2=-1)[..., None]
    return a * tr + _mv(V, a) - 2.0 * _mv(np.swapaxes(V, -1, -2), a)


def _gyrobias_se3_ito(xi, omega, beta_hat, Q):
    """Ito drift and diffusion of the semidirect-law model.

    The correction 1/2 sum_{j,k} (G Q)_jk d_j G_ik is contracted analytically
    block by block instead of forming the full gradient.
    """
    delta, u = xi[..., :3], xi[..., 3:]
    x = np.einsum("...i,...i->...", delta, delta)
    cf = coefficients(x, deriv=True)
    c2 = {k: v[..., None, None] for k, v in cf.items()}
    c1 = {k: v[..., None] for k, v in cf.items()}
    I3 = np.eye(3)
    p = np.einsum("...i,...i->...", delta, u)
    p1 = p[..., None]
    p2 = p[..., None, None]
    D = skew(delta)
    U = skew(u)
    D2 = delta[..., :, None] * delta[..., None, :] - x[..., None, None] * I3
    UD_DU = _sym_outer(delta, u) - 2.0 * p2 * I3
    R = I3 + c2["A"] * D + c2["B"] * D2
    J = I3 - c2["B"] * D + c2["C"] * D2
    W = I3 - 0.5 * D + c2["E"] * D2
    N = c2["B"] * U + c2["C"] * UD_DU + p2 * (c2["F"] * D - c2["H"] * D2)
    M1 = c2["dB"] * U + c2["dC"] * UD_DU + p2 * (c2["dF"] * D - c2["dH"] * D2)
    M2 = c2["F"] * D - c2["H"] * D2
    WN = W @ N
    WNW = WN @ W

    v = beta_hat + _mv(J, u)
    bt = _mv(R, v)
    Du = cross(delta, u)
    D2u = cross(delta, Du)
    Mj = (2.0 * (-c1["dB"] * Du + c1["dC"] * D2u - c1["C"] * u)[..., :, None] * delta[..., None, :]
          + c2["B"] * U + c2["C"] * (delta[..., :, None] * u[..., None, :] + p2 * I3))
    dbt = np.concatenate([-R @ skew(v) @ J + R @ Mj, R @ J], -1)    # [..., i, j]
    Bt = skew(bt)

    G = np.zeros(xi.shape[:-1] + (6, 6))
    G[..., :3, :3] = -W
    G[..., 3:, :3] = WNW - W @ Bt
    G[..., 3:, 3:] = W

    def t_dW(V):
        # sum_k dW_k V_k with dW_k = -1/2 [e_k]x + 2 delta_k dE D^2 + E ([e_k]x D + D [e_k]x)
        return (-0.5 * _cross_trace(V) + 2.0 * c1["dE"] * _mv(D2, _mv(np.swapaxes(V, -1, -2), delta))
                + c1["E"] * _sym_contract(delta, V))

    def t_dN_delta(V):
        Vtd = _mv(np.swapaxes(V, -1, -2), delta)
        Vtu = _mv(np.swapaxes(V, -1, -2), u)
        return (2.0 * _mv(M1, Vtd) + _mv(M2, Vtu) + c1["C"] * _sym_contract(u, V)
                + p1 * c1["F"] * _cross_trace(V) - p1 * c1["H"] * _sym_contract(delta, V))

    def t_dN_u(V):
        return (c1["B"] * _cross_trace(V) + c1["C"] * _sym_contract(delta, V)
                + _mv(M2, _mv(np.swapaxes(V, -1, -2), delta)))

    GQ = G @ Q
    a = GQ[..., :, :3]                 # rows a_j, j over all six coordinates
    c = GQ[..., :3, 3:]                # rows c_j, j over the rotation coordinates
    a3 = a[..., :3, :]
    Ta = t_dW(a3)
    Wa = np.swapaxes(W @ np.swapaxes(a, -1, -2), -1, -2)
    NWa = np.swapaxes(N @ np.swapaxes(Wa[..., :3, :], -1, -2), -1, -2)
    Bta = np.swapaxes(Bt @ np.swapaxes(a3, -1, -2), -1, -2)
    lower = (_mv(W, t_dN_delta(Wa[..., :3, :]) + t_dN_u(Wa[..., 3:, :]))
             + t_dW(NWa - Bta + c) + _mv(WN, Ta)
             - _mv(W, cross(np.swapaxes(dbt, -1, -2), a).sum(-2)))
    corr = np.concatenate([-Ta, lower], -1)

    y1 = omega - beta_hat
    y2 = -cross(omega, beta_hat)
    ad_y = np.concatenate([cross(delta, y1), cross(u, y1) + cross(delta, y2)], -1)
    diff = beta_hat - bt
    f = np.concatenate([_mv(W, diff), _mv(W, cross(omega, diff)) - _mv(WNW, diff)], -1)
    return f - ad_y + 0.5 * corr, G


def model_gyrobias_se3(omega, beta_hat, Q_eta, Q_zeta) -> SdeModel:
    """Attitude and gyro-bias error under the semidirect (SE(3)) group law.

    The state element is (R, beta) with dR/dt = [omega - beta - eta]x R and
    d beta/dt = zeta, and ``beta_hat`` is the current bias estimate.
    """
    omega = np.asarray(omega, dtype=float)
    beta_hat = np.asarray(beta_hat, dtype=float)

    def _inputs(xi):
        shape = xi.shape[:-1] + (3,)
        return (np.broadcast_to(_bcast(omega, xi), shape), np.broadcast_to(_bcast(beta_hat, xi), shape))

    Q = block_diag(Q_eta, Q_zeta)

    def joint(xi):
        xi = np.asarray(xi, dtype=float)
        return _gyrobias_se3_joint(xi, *_inputs(xi))

    def ito(xi):
        xi = np.asarray(xi, dtype=float)
        return _jit.evaluate(_jit.gyrobias_se3_ito, xi, *_inputs(xi), Q)

    return SdeModel("gyrobias_se3", 6, 6, lambda xi: joint(xi)[0], lambda xi: joint(xi)[1],
                    Q, {"omega": omega, "beta_hat": beta_hat}, lambda xi: joint(xi)[2], joint, ito)


def model_gyrobias_dp(omega, beta_hat, Q_eta, Q_zeta) -> SdeModel:
    """Attitude and gyro-bias error under the direct-product group law."""
    omega = np.asarray(omega, dtype=float)
    beta_hat = np.asarray(beta_hat, dtype=float)

    def drift(xi):
        xi = np.asarray(xi, dtype=float)
        delta, u = xi[..., :3], xi[..., 3:]
        r = _bcast(omega, xi) - _bcast(beta_hat, xi)
        d_delta = cross(r * np.ones_like(delta), delta) - _mv(wbar_so3(delta), u)
        return np.concatenate([d_delta, np.zeros_like(u)], -1)

    def diffusion(xi):
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape[:-1] + (6, 6))
        out[..., :3, :3] = -wbar_so3(xi[..., :3])
        out[..., 3:, 3:] = np.eye(3)
        return out

    def grad(xi):
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape[:-1] + (6, 6, 6))
        out[..., :3, :3, :3] = -wbar_so3_grad(xi[..., :3])
        return out

    def joint(xi):
        xi = np.asarray(xi, dtype=float)
        delta, u = xi[..., :3], xi[..., 3:]
        cf = coefficients(np.einsum("...i,...i->...", delta, delta), keys=("E", "dE"))
        W = wbar_so3(delta, cf)
        r = _bcast(omega, xi) - _bcast(beta_hat, xi)
        f = np.concatenate([cross(r * np.ones_like(delta), delta) - np.einsum("...ij,...j->...i", W, u),
                            np.zeros_like(u)], -1)
        G = np.zeros(xi.shape[:-1] + (6, 6))
        G[..., :3, :3] = -W
        G[..., 3:, 3:] = np.eye(3)
        dG = np.zeros(xi.shape[:-1] + (6, 6, 6))
        dG[..., :3, :3, :3] = -wbar_so3_grad(delta, cf)
        return f, G, dG

    Q = block_diag(Q_eta, Q_zeta)

    def ito(xi):
        xi = np.asarray(xi, dtype=float)
        shape = xi.shape[:-1] + (3,)
        return _jit.evaluate(_jit.gyrobias_dp_ito, xi, np.broadcast_to(_bcast(omega, xi), shape),
                             np.broadcast_to(_bcast(beta_hat, xi), shape), Q)

    return SdeModel("gyrobias_dp", 6, 6, drift, diffusion, Q,
                    {"omega": omega, "beta_hat": beta_hat}, grad, joint, ito)


# ---------------------------------------------------------------- Ito correction

def diffusion_grad_fd(model: SdeModel, xi, h: Optional[float] = None) -> np.ndarray:
    """Central-difference d G_ik / d xi_j, step 1e-6 max(1, |xi|) unless given."""
    xi = np.asarray(xi, dtype=float)
    if h is None:
        step = 1e-6 * np.maximum(1.0, np.linalg.norm(xi, axis=-1))[..., None]
    else:
        step = np.full(xi.shape[:-1] + (1,), float(h))
    cols = []
    for j in range(model.n):
        e = np.zeros(model.n)
        e[j] = 1.0
        dG = (model.diffusion(xi + step * e) - model.diffusion(xi - step * e)) / (2.0 * step[..., None])
        cols.append(dG)
    return np.stack(cols, axis=-3)


def _ito(model: SdeModel, xi):
    if model.ito is not None:
        return model.ito(xi)
    f, G, dG = model.evaluate(xi)
    GQ = G @ model.Q
    # sum_{j,k} GQ_jk dG_jik as one matmul over the flattened (j, k) pair
    n = dG.shape[-2]
    dGt = np.swapaxes(dG, -3, -2).reshape(dG.shape[:-3] + (n, -1))
    corr = (dGt @ GQ.reshape(GQ.shape[:-2] + (-1, 1)))[..., 0]
    return f + 0.5 * corr, G


def ito_drift(model: SdeModel, xi) -> np.ndarray:
    """f~_i = f_i + 1/2 sum_{j,k,l} G_jl Q_kl d_j G_ik."""
    return _ito(model, np.asarray(xi, dtype=float))[0]


# ---------------------------------------------------------------- CTUT

def _moment_rates(model: SdeModel, mean, cov, lam, w):
    off = sigma_offsets(cov, lam)
    pts = mean[..., None, :] + off
    if np.any(model.rot_norm(pts) >= np.pi):
        raise StepReject("a sigma point left the principal branch")
    f, G = _ito(model, pts)
    fbar = w @ f
    C = np.swapaxes(off * w[:, None], -1, -2) @ (f - fbar[..., None, :])
    # E[G Q G^T]: stack the sigma points along the inner dimension
    S, n, m = G.shape[-3:]
    Gw = np.moveaxis(G * w[:, None, None], -3, -2).reshape(G.shape[:-3] + (n, S * m))
    GQ = np.moveaxis(G @ model.Q, -3, -2).reshape(G.shape[:-3] + (n, S * m))
    GQG = Gw @ np.swapaxes(GQ, -1, -2)
    return fbar, C + np.swapaxes(C, -1, -2) + GQG


def ctut_step(model: SdeModel, mean, cov, dt: float, lam: float = 0.0):
    """One RK4 step of the unscented moment equations."""
    w = ut_weights(model.n, lam)
    k1m, k1P = _moment_rates(model, mean, cov, lam, w)
    k2m, k2P = _moment_rates(model, mean + 0.5 * dt * k1m, cov + 0.5 * dt * k1P, lam, w)
    k3m, k3P = _moment_rates(model, mean + 0.5 * dt * k2m, cov + 0.5 * dt * k2P, lam, w)
    k4m, k4P = _moment_rates(model, mean + dt * k3m, cov + dt * k3P, lam, w)
    mean = mean + dt / 6.0 * (k1m + 2 * k2m + 2 * k3m + k4m)
    cov = cov + dt / 6.0 * (k1P + 2 * k2P + 2 * k3P + k4P)
    return mean, symmetrize(cov)


def ctut_propagate(m0: Moments, model: SdeModel, t_span, dt: float, lam: float = 0.0) -> Moments:
    """Propagate (mean, cov) over t_span with fixed-step RK4 of the moment equations."""
    t0, t1 = t_span
    steps = max(1, int(np.ceil((t1 - t0) / dt - 1e-9)))
    h = (t1 - t0) / steps
    mean = np.asarray(m0.mean, dtype=float)
    cov = np.asarray(m0.cov, dtype=float)
    for _ in range(steps):
        mean, cov = ctut_step(model, mean, cov, h, lam)
    return Moments(mean, cov)


# ---------------------------------------------------------------- MAP propagation

def se23_flow(mu, omega, a, g, t: float) -> np.ndarray:
    """Exact solution of dR = [w]x R, dv = [w]x v + a + R g, dr = [w]x r + v."""
    mu = np.asarray(mu, dtype=float)
    A = -t * skew(omega)
    E = expm(-A)
    R0, v0, r0 = mu[:3, :3], mu[:3, 3], mu[:3, 4]
    gb = R0 @ np.asarray(g, dtype=float)
    out = np.eye(5)
    out[:3, :3] = E @ R0
    out[:3, 3] = E @ (v0 + t * gb) + t * int_exp(A) @ a
    out[:3, 4] = E @ (r0 + t * v0 + 0.5 * t * t * gb) + t * t * int_s_exp(A) @ a
    return out


def map_propagate(mu, kind: str, params: dict, t_span):
    """Noise-free propagation of a group mean with inputs held constant."""
    t = float(t_span[1] - t_span[0])
    if kind == "s3":
        return S3.exp(0.5 * t * np.asarray(params["omega"])) @ mu
    if kind == "so3":
        return so3_exp(t * np.asarray(params["omega"])) @ mu
    if kind == "se3":
        xi = np.concatenate([params["omega"], params["v"]])
        return SE3.exp(t * xi) @ mu
    if kind == "se23":
        return se23_flow(mu, params["omega"], np.asarray(params["a"], dtype=float),
                         params.get("g", np.zeros(3)), t)
    if kind == "gyrobias_se3":
        w = np.asarray(params["omega"], dtype=float)
        bh = mu.beta
        y = np.concatenate([w - bh, -cross(w, bh)], -1)
        return ROTBIAS_SE3.compose(ROTBIAS_SE3.exp(t * y), mu)
    if kind == "gyrobias_dp":
        w = np.asarray(params["omega"], dtype=float)
        R = so3_exp(t * (w - mu.beta)) @ mu.R
        return RotBias(R, mu.beta.copy(), mu.law)
    raise ValueError(f"unknown model kind {kind!r}")


# ---------------------------------------------------------------- SU(2) short time

def su2_shorttime_moments(m0: Moments, omega, q: float, t_span, mean_rate: float = 1 / 6,
                          contraction: float = 1 / 6, trace_rate: float = 1 / 12,
                          source: float = 1 / 4) -> Moments:
    """Exact solution of the linear small-angle moment equations of :func:`model_su2`.

        dm/dt = -([w]x + mean_rate q^2 I) m
        dP/dt = -A P - P A^T - trace_rate q^2 (P - tr(P) I) + source q^2 I,
        A = [w]x + contraction q^2 I.

    The defaults are the leading-order coefficients implied by the Ito drift
    and diffusion of the model at isotropic noise q^2 I.
    """
    W = skew(np.asarray(omega, dtype=float))
    q2 = float(q) ** 2
    t = float(t_span[1] - t_span[0])
    I3 = np.eye(3)
    mean = expm(-t * (W + mean_rate * q2 * I3)) @ np.asarray(m0.mean, dtype=float)
    A = W + contraction * q2 * I3
    # vec(P)' = L vec(P) + s vec(I), row-major vec
    L = -(np.kron(A, I3) + np.kron(I3, A)) - trace_rate * q2 * (np.eye(9) - np.outer(I3.ravel(), I3.ravel()))
    aug = np.zeros((10, 10))
    aug[:9, :9] = L
    aug[:9, 9] = source * q2 * I3.ravel()
    x = expm(t * aug) @ np.append(np.asarray(m0.cov, dtype=float).ravel(), 1.0)
    return Moments(mean, symmetrize(x[:9].reshape(3, 3)))
