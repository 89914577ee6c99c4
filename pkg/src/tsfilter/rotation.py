"""Closed-form rotation kernels shared by every group in the package.

All functions broadcast over leading axes: a rotation vector has shape
(..., 3) and matrices have shape (..., 3, 3).  Every closed form is written
in terms of smooth scalar coefficients of x = |delta|^2, each evaluated by a
power series for x < 1 and by its trigonometric expression otherwise, so
nothing is singular at the origin.
"""
from __future__ import annotations

import math
from functools import lru_cache

import numpy as np
from scipy.special import bernoulli

from .errors import CutLocus

_SERIES_SWITCH = 1.0  # x = theta^2 below which the power series is used
_NTERMS = 22

# Power-series coefficients in x = theta^2.
_A = np.array([(-1) ** k / math.factorial(2 * k + 1) for k in range(_NTERMS)])
_B = np.array([(-1) ** k / math.factorial(2 * k + 2) for k in range(_NTERMS)])
_C = np.array([(-1) ** k / math.factorial(2 * k + 3) for k in range(_NTERMS)])
_F = np.array([(-1) ** (k + 1) * 2 * (k + 1) / math.factorial(2 * k + 4) for k in range(_NTERMS)])
_H = np.array([(-1) ** k * (2 * k + 2) / math.factorial(2 * k + 5) for k in range(_NTERMS)])
_bern = bernoulli(2 * _NTERMS + 2)
_E = np.array([abs(_bern[2 * k + 2]) / math.factorial(2 * k + 2) for k in range(_NTERMS)])
_COS = np.array([(-1) ** k / math.factorial(2 * k) for k in range(_NTERMS)])


_SERIES = {"A": _A, "B": _B, "C": _C, "E": _E, "F": _F, "H": _H, "cos": _COS}
_SERIES.update({"d" + k: v[1:] * np.arange(1, _NTERMS) for k, v in list(_SERIES.items()) if k != "cos"})
BASE_KEYS = ("A", "B", "C", "E", "F", "H", "cos")
DERIV_KEYS = ("dA", "dB", "dC", "dE", "dF", "dH")
_TAIL = 1e-17


def _horner(c: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.full_like(x, c[-1])
    for ck in c[-2::-1]:
        out = out * x + ck
    return out


def _truncate(c: np.ndarray, xmax: float) -> np.ndarray:
    """Drop trailing terms that cannot matter for any x <= xmax."""
    if xmax <= 0.0:
        return c[:1]
    mag = np.abs(c) * xmax ** np.arange(len(c))
    keep = np.nonzero(mag > _TAIL * np.abs(c).max())[0]
    return c[:min(len(c), int(keep[-1]) + 2)] if len(keep) else c[:1]


@lru_cache(maxsize=None)
def _truncated(key: str, octave: int) -> np.ndarray:
    return _truncate(_SERIES[key], 2.0 ** octave)


def _series(key: str, xmax: float) -> np.ndarray:
    # round xmax up to a power of two so truncations can be cached
    if xmax <= 0.0:
        return _SERIES[key][:1]
    return _truncated(key, max(-1100, math.ceil(math.log2(xmax))))


def _closed_forms(xl: np.ndarray) -> dict[str, np.ndarray]:
    t = np.sqrt(xl)
    s, c = np.sin(t), np.cos(t)
    A = s / t
    B = (1.0 - c) / xl
    C = (1.0 - A) / xl
    F = (A - 2.0 * B) / xl
    H = (2.0 - 3.0 * A + c) / xl**2
    half = 0.5 * t
    k = half * np.cos(half) / np.sin(half)
    E = (1.0 - k) / xl
    dA = (c - A) / (2.0 * xl)
    dB = (0.5 * A - B) / xl
    dk = (0.5 * np.cos(half) / np.sin(half) - 0.25 * t / np.sin(half) ** 2) / (2.0 * t)
    return {
        "A": A, "B": B, "C": C, "E": E, "F": F, "H": H, "cos": c,
        "dA": dA, "dB": dB, "dC": (-dA - C) / xl, "dE": (-dk - E) / xl,
        "dF": (dA - 2.0 * dB - F) / xl, "dH": (-3.0 * dA - 0.5 * A - 2.0 * xl * H) / xl**2,
    }


def coefficients(x, deriv: bool = False, keys=None) -> dict[str, np.ndarray]:
    """Scalar coefficients of the rotation closed forms at x = theta^2.

    A = sin t / t, B = (1 - cos t) / t^2, C = (t - sin t) / t^3,
    E = (1 - (t/2) cot(t/2)) / t^2, F = (A - 2B) / t^2,
    H = (2 - 3A + cos t) / t^4.  With ``deriv`` the x-derivatives are
    returned under keys prefixed with ``d``; ``keys`` restricts the output.
    """
    x = np.asarray(x, dtype=float)
    names = tuple(keys) if keys is not None else BASE_KEYS + (DERIV_KEYS if deriv else ())
    small = x < _SERIES_SWITCH
    if small.all():
        xmax = float(x.max(initial=0.0))
        return {k: _horner(_series(k, xmax), x) for k in names}
    xs = np.where(small, x, 0.0)
    xmax = float(xs.max(initial=0.0))
    closed = _closed_forms(np.where(small, _SERIES_SWITCH, x))
    return {k: np.where(small, _horner(_series(k, xmax), xs), closed[k]) for k in names}


def skew(v) -> np.ndarray:
    """Cross-product matrix [v]x, so that skew(a) @ b = a x b."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def cross(a, b) -> np.ndarray:
    """Broadcasting cross product of 3-vectors on the last axis."""
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0], -1)


def vee(S) -> np.ndarray:
    """Inverse of :func:`skew` (uses the antisymmetric part)."""
    S = np.asarray(S, dtype=float)
    return 0.5 * np.stack([S[..., 2, 1] - S[..., 1, 2],
                           S[..., 0, 2] - S[..., 2, 0],
                           S[..., 1, 0] - S[..., 0, 1]], -1)


def _sq(delta):
    return np.einsum("...i,...i->...", delta, delta)


def _col(a):
    return np.asarray(a)[..., None, None]


def so3_exp(delta, cf=None) -> np.ndarray:
    """Rodrigues formula for exp([delta]x)."""
    delta = np.asarray(delta, dtype=float)
    cf = coefficients(_sq(delta), keys=("A", "B")) if cf is None else cf
    D = skew(delta)
    return np.eye(3) + _col(cf["A"]) * D + _col(cf["B"]) * (D @ D)


def so3_angle(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    w = vee(R)
    tr = np.trace(R, axis1=-2, axis2=-1)
    return np.arctan2(np.linalg.norm(w, axis=-1), 0.5 * (tr - 1.0))


def so3_log(R, cut_tol: float = 1e-9) -> np.ndarray:
    """Principal logarithm of a rotation matrix, angle in [0, pi)."""
    R = np.asarray(R, dtype=float)
    w = vee(R)
    tr = np.trace(R, axis1=-2, axis2=-1)
    theta = np.arctan2(np.linalg.norm(w, axis=-1), 0.5 * (tr - 1.0))
    if np.any(theta > np.pi - cut_tol):
        raise CutLocus(f"rotation angle {float(np.max(theta)):.17g} is at the cut locus")
    cf = coefficients(theta**2, keys=("A", "B"))
    near = w / cf["A"][..., None]
    # Large angles: recover the axis from the symmetric part.
    Bc = np.where(theta > 0.5 * np.pi, cf["B"], 1.0)[..., None, None]
    sym = 0.5 * (R + np.swapaxes(R, -1, -2)) - np.cos(theta)[..., None, None] * np.eye(3)
    outer = sym / Bc  # = delta delta^T
    diag = np.clip(np.diagonal(outer, axis1=-2, axis2=-1), 0.0, None)
    idx = np.argmax(diag, axis=-1)
    col = np.take_along_axis(outer, idx[..., None, None], axis=-1)[..., 0]
    piv = np.sqrt(np.take_along_axis(diag, idx[..., None], axis=-1))
    far = col / np.where(piv > 0, piv, 1.0)
    sign = np.sign(np.einsum("...i,...i->...", far, w))
    far = far * np.where(sign == 0, 1.0, sign)[..., None]
    return np.where((theta > 0.5 * np.pi)[..., None], far, near)


def jbar_so3(delta, cf=None) -> np.ndarray:
    """Integral of exp(-s [delta]x) over s in [0, 1]."""
    delta = np.asarray(delta, dtype=float)
    cf = coefficients(_sq(delta), keys=("B", "C")) if cf is None else cf
    D = skew(delta)
    return np.eye(3) - _col(cf["B"]) * D + _col(cf["C"]) * (D @ D)


def wbar_so3(delta, cf=None) -> np.ndarray:
    """Inverse of the integral of exp(s [delta]x) over s in [0, 1]."""
    delta = np.asarray(delta, dtype=float)
    cf = coefficients(_sq(delta), keys=("E",)) if cf is None else cf
    D = skew(delta)
    return np.eye(3) - 0.5 * D + _col(cf["E"]) * (D @ D)


SKEW_BASIS = skew(np.eye(3))  # [e_k]x stacked along axis 0


def jbar_so3_grad(delta, cf=None) -> np.ndarray:
    """d jbar_so3 / d delta_k, returned with shape (..., 3, 3, 3) indexed [k, i, j]."""
    delta = np.asarray(delta, dtype=float)
    cf = coefficients(_sq(delta), keys=("B", "C", "dB", "dC")) if cf is None else cf
    D = skew(delta)[..., None, :, :]
    dk = 2.0 * delta[..., :, None, None]
    return (-(dk * _col(cf["dB"])[..., None, :, :]) * D - _col(cf["B"])[..., None, :, :] * SKEW_BASIS
            + dk * _col(cf["dC"])[..., None, :, :] * (D @ D)
            + _col(cf["C"])[..., None, :, :] * (SKEW_BASIS @ D + D @ SKEW_BASIS))


def wbar_so3_grad(delta, cf=None) -> np.ndarray:
    """d wbar_so3 / d delta_k with shape (..., 3, 3, 3) indexed [k, i, j]."""
    delta = np.asarray(delta, dtype=float)
    cf = coefficients(_sq(delta), keys=("E", "dE")) if cf is None else cf
    D = skew(delta)[..., None, :, :]
    dk = 2.0 * delta[..., :, None, None]
    return (-0.5 * SKEW_BASIS + dk * _col(cf["dE"])[..., None, :, :] * (D @ D)
            + _col(cf["E"])[..., None, :, :] * (SKEW_BASIS @ D + D @ SKEW_BASIS))


def n_matrix(delta, u, cf=None) -> np.ndarray:
    """The coupling matrix N(delta, u) of the SE(3) W-bar lower block.

    N = int_0^1 e^{t D} [ int_0^t e^{-s D} u ds ]x dt with D = [delta]x,
    evaluated as B [u]x + C([u]x D + D [u]x) + p F D - p H D^2, p = <delta, u>.
    """
    delta = np.asarray(delta, dtype=float)
    u = np.asarray(u, dtype=float)
    cf = coefficients(_sq(delta), keys=("B", "C", "F", "H")) if cf is None else cf
    D = skew(delta)
    U = skew(u)
    p = _col(np.einsum("...i,...i->...", delta, u))
    return (_col(cf["B"]) * U + _col(cf["C"]) * (U @ D + D @ U)
            + p * _col(cf["F"]) * D - p * _col(cf["H"]) * (D @ D))


def n_matrix_grad(delta, u, cf=None) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of :func:`n_matrix`.

    Returns (dN/d delta_k, dN/du_k), each of shape (..., 3, 3, 3) indexed [k, i, j].
    """
    delta = np.asarray(delta, dtype=float)
    u = np.asarray(u, dtype=float)
    cf = coefficients(_sq(delta), deriv=True) if cf is None else cf
    g = {k: _col(v)[..., None, :, :] for k, v in cf.items()}
    D = skew(delta)[..., None, :, :]
    U = skew(u)[..., None, :, :]
    D2 = D @ D
    p = np.einsum("...i,...i->...", delta, u)[..., None, None, None]
    dk = 2.0 * delta[..., :, None, None]
    uk = u[..., :, None, None]
    dN_dd = (dk * g["dB"] * U + dk * g["dC"] * (U @ D + D @ U) + g["C"] * (U @ SKEW_BASIS + SKEW_BASIS @ U)
             + uk * g["F"] * D + p * dk * g["dF"] * D + p * g["F"] * SKEW_BASIS
             - uk * g["H"] * D2 - p * dk * g["dH"] * D2 - p * g["H"] * (SKEW_BASIS @ D + D @ SKEW_BASIS))
    # N is linear in u: dN/du_k = N(delta, e_k)
    dN_du = (g["B"] * SKEW_BASIS + g["C"] * (SKEW_BASIS @ D + D @ SKEW_BASIS)
             + delta[..., :, None, None] * g["F"] * D - delta[..., :, None, None] * g["H"] * D2)
    return dN_dd, dN_du


def n_matrix_explicit(delta, u, taylor_below: float = 1e-2) -> np.ndarray:
    """N(delta, u) from its pseudo-inverse form, with a Taylor fallback.

    N = [[D u]x, J(-delta)] / t^2 - (<delta,u> / t^4)(I - (I - D) e^D) D with
    J(delta) = delta delta^T / t^2 + (I - e^{-D}) D^#, D^# = -D / t^2.
    Below ``taylor_below`` the degree-4 expansion of the double integral is used.
    Single (3,) inputs only.
    """
    delta = np.asarray(delta, dtype=float)
    u = np.asarray(u, dtype=float)
    th = float(np.linalg.norm(delta))
    D = skew(delta)
    I3 = np.eye(3)
    if th < taylor_below:
        out = np.zeros((3, 3))
        Dj = I3
        for j in range(5):
            Dk = I3
            for k in range(5 - j):
                coef = (-1) ** k / (math.factorial(j) * math.factorial(k + 1) * (j + k + 2))
                out += coef * Dj @ skew(Dk @ u)
                Dk = Dk @ D
            Dj = Dj @ D
        return out
    from scipy.linalg import expm
    Dpinv = -D / th**2
    J_minus = np.outer(delta, delta) / th**2 + (I3 - expm(D)) @ (-Dpinv)
    # J(-delta) = proj + (I - e^{D})(-D)^#, and (-D)^# = -D^#
    Du = skew(D @ u)
    first = (Du @ J_minus - J_minus @ Du) / th**2
    second = float(delta @ u) / th**4 * (I3 - (I3 - D) @ expm(D)) @ D
    return first - second
