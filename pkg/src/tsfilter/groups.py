"""Concrete matrix Lie groups and the rotation-plus-bias product group.

Group objects are stateless singletons.  All closed forms broadcast over
leading axes, so a stack of tangent vectors (..., n) maps to a stack of
elements (..., d, d).  Quaternions use the (v, s) layout with the product
q * q' = (s v' + s' v - v x v', s s' - <v, v'>).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CutLocus, TagMismatch
from .lie import LieAlgebraBasis, jbar_series, wbar_series, adbar_from_basis
from .rotation import (coefficients, jbar_so3, n_matrix, skew, so3_exp, so3_log,
                       vee, wbar_so3)

CUT_TOL = 1e-9


# ---------------------------------------------------------------- quaternions

@dataclass(frozen=True)
class Quaternion:
    """Unit quaternion with vector part ``v`` and scalar part ``s``."""

    v: np.ndarray
    s: float

    @classmethod
    def identity(cls) -> "Quaternion":
        return cls(np.zeros(3), 1.0)

    @classmethod
    def from_array(cls, q) -> "Quaternion":
        q = np.asarray(q, dtype=float)
        q = q / np.linalg.norm(q)
        return cls(q[:3].copy(), float(q[3]))

    def as_array(self) -> np.ndarray:
        return np.append(self.v, self.s)

    def __neg__(self) -> "Quaternion":
        return Quaternion(-self.v, -self.s)

    def __mul__(self, other: "Quaternion") -> "Quaternion":
        return quat_mul(self, other)


def quat_left_matrix(q: Quaternion) -> np.ndarray:
    """4x4 matrix [q *] = s I + M_s(v), so that [q *] q' = q * q'."""
    return q.s * np.eye(4) + ms_matrix(q.v)


def quat_mul(q: Quaternion, p: Quaternion) -> Quaternion:
    v = q.s * p.v + p.s * q.v - np.cross(q.v, p.v)
    s = q.s * p.s - float(q.v @ p.v)
    return Quaternion.from_array(np.append(v, s))


def quat_to_rot(q) -> np.ndarray:
    """R(q) = I - 2 s [v]x + 2 [v]x^2 for a quaternion or (..., 4) array."""
    arr = q.as_array() if isinstance(q, Quaternion) else np.asarray(q, dtype=float)
    V = skew(arr[..., :3])
    s = arr[..., 3][..., None, None]
    return np.eye(3) - 2.0 * s * V + 2.0 * V @ V


def ms_matrix(v) -> np.ndarray:
    """The 4x4 antisymmetric matrix M_s(v) = [[-[v]x, v], [-v^T, 0]]."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (4, 4))
    out[..., :3, :3] = -skew(v)
    out[..., :3, 3] = v
    out[..., 3, :3] = -v
    return out


def reorthonormalize(R, tol: float = 1e-9) -> np.ndarray:
    """One Gram-Schmidt pass on the rows when R R^T drifts from I."""
    R = np.asarray(R, dtype=float)
    resid = np.abs(R @ np.swapaxes(R, -1, -2) - np.eye(3)).max(axis=(-2, -1))
    if not np.any(resid > tol):
        return R
    x = R[..., 0, :]
    x = x / np.linalg.norm(x, axis=-1, keepdims=True)
    y = R[..., 1, :] - np.einsum("...i,...i->...", R[..., 1, :], x)[..., None] * x
    y = y / np.linalg.norm(y, axis=-1, keepdims=True)
    z = np.cross(x, y)
    fixed = np.stack([x, y, z], -2)
    return np.where((resid > tol)[..., None, None], fixed, R)


# ---------------------------------------------------------------- BCH on s / so(3)

def bch_s(a, b) -> np.ndarray:
    """Closed-form BCH on the quaternion algebra: e^{M_s(a)} e^{M_s(b)} = e^{M_s(c)}."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ca = coefficients(np.einsum("...i,...i->...", a, a), keys=("A", "cos"))
    cb = coefficients(np.einsum("...i,...i->...", b, b), keys=("A", "cos"))
    va = a * ca["A"][..., None]
    vb = b * cb["A"][..., None]
    vec = ca["cos"][..., None] * vb + cb["cos"][..., None] * va - np.cross(va, vb)
    scal = ca["cos"] * cb["cos"] - np.einsum("...i,...i->...", va, vb)
    rc = np.arctan2(np.linalg.norm(vec, axis=-1), scal)
    if np.any(rc > np.pi - CUT_TOL):
        raise CutLocus("composed rotation reaches the cut locus")
    return vec / coefficients(rc**2, keys=("A",))["A"][..., None]


def bch_so3(a, b) -> np.ndarray:
    """Closed-form BCH on so(3): exp([a]x) exp([b]x) = exp([c]x)."""
    return -2.0 * bch_s(-0.5 * np.asarray(a, dtype=float), -0.5 * np.asarray(b, dtype=float))


# ---------------------------------------------------------------- matrix groups

class MatrixGroup:
    """Generic matrix Lie group; subclasses override the closed forms."""

    name = "matrix"
    basis: LieAlgebraBasis
    rot_slice = slice(0, 3)

    @property
    def n(self) -> int:
        return self.basis.n

    @property
    def d(self) -> int:
        return self.basis.d

    def __repr__(self) -> str:
        return f"<group {self.name}>"

    def matrize(self, xi) -> np.ndarray:
        return self.basis.matrize(xi)

    def vectorize(self, X) -> np.ndarray:
        return self.basis.vectorize(X)

    def identity(self) -> np.ndarray:
        return np.eye(self.d)

    def _check(self, *gs):
        for g in gs:
            if np.shape(g)[-2:] != (self.d, self.d):
                raise TagMismatch(f"element of shape {np.shape(g)} is not in {self.name}")

    def compose(self, a, b) -> np.ndarray:
        self._check(a, b)
        return np.asarray(a) @ np.asarray(b)

    def inverse(self, g) -> np.ndarray:
        self._check(g)
        return np.linalg.inv(g)

    def insert_axis(self, g):
        """Insert a broadcast axis in front of the element axes."""
        return np.asarray(g)[..., None, :, :]

    def take(self, g, idx):
        return np.asarray(g)[idx]

    def adbar(self, xi) -> np.ndarray:
        return adbar_from_basis(self.basis, xi)

    def jbar(self, xi) -> np.ndarray:
        return jbar_series(self.adbar(xi))

    def wbar(self, xi) -> np.ndarray:
        return wbar_series(self.adbar(xi))

    def jbar_inv(self, xi) -> np.ndarray:
        """Inverse of jbar(xi), which equals wbar(-xi)."""
        return self.wbar(-np.asarray(xi, dtype=float))

    def bch(self, a, b) -> np.ndarray:
        return self.log(self.compose(self.exp(a), self.exp(b)))

    def rot_norm(self, xi) -> np.ndarray:
        return np.linalg.norm(np.asarray(xi)[..., self.rot_slice], axis=-1)

    def membership_residual(self, g) -> float:
        raise NotImplementedError


def _rotation_residual(R) -> float:
    R = np.asarray(R)
    orth = np.abs(R @ np.swapaxes(R, -1, -2) - np.eye(R.shape[-1])).max()
    det = np.abs(np.linalg.det(R) - 1.0).max()
    return float(max(orth, det))


class S3Group(MatrixGroup):
    """Unit quaternions represented as 4x4 left-multiplication matrices in SO(4)."""

    name = "S3"

    def __init__(self):
        self.basis = LieAlgebraBasis(ms_matrix(np.eye(3)))

    def exp(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        cf = coefficients(np.einsum("...i,...i->...", a, a), keys=("A", "cos"))
        return cf["cos"][..., None, None] * np.eye(4) + cf["A"][..., None, None] * ms_matrix(a)

    def log(self, g) -> np.ndarray:
        self._check(g)
        g = np.asarray(g, dtype=float)
        vec, scal = g[..., :3, 3], g[..., 3, 3]
        r = np.arctan2(np.linalg.norm(vec, axis=-1), scal)
        if np.any(r > np.pi - CUT_TOL):
            raise CutLocus("quaternion angle at the cut locus")
        return vec / coefficients(r**2, keys=("A",))["A"][..., None]

    def inverse(self, g) -> np.ndarray:
        self._check(g)
        return np.swapaxes(np.asarray(g), -1, -2)

    def adbar(self, xi) -> np.ndarray:
        return -2.0 * skew(xi)

    def jbar(self, xi) -> np.ndarray:
        return jbar_so3(-2.0 * np.asarray(xi, dtype=float))

    def wbar(self, xi) -> np.ndarray:
        return wbar_so3(-2.0 * np.asarray(xi, dtype=float))

    def bch(self, a, b) -> np.ndarray:
        return bch_s(a, b)

    def membership_residual(self, g) -> float:
        return _rotation_residual(g)

    @staticmethod
    def quaternion(g) -> np.ndarray:
        """The quaternion (v, s) whose left-multiplication matrix is g."""
        return np.asarray(g)[..., :, 3]

    @staticmethod
    def rotation(g) -> np.ndarray:
        return quat_to_rot(np.asarray(g)[..., :, 3])


class SO3Group(MatrixGroup):
    name = "SO3"

    def __init__(self):
        self.basis = LieAlgebraBasis(skew(np.eye(3)))

    def exp(self, xi):
        return so3_exp(xi)

    def log(self, g):
        self._check(g)
        return so3_log(g, CUT_TOL)

    def inverse(self, g):
        self._check(g)
        return np.swapaxes(np.asarray(g), -1, -2)

    def adbar(self, xi):
        return skew(xi)

    def jbar(self, xi):
        return jbar_so3(xi)

    def wbar(self, xi):
        return wbar_so3(xi)

    def bch(self, a, b):
        return bch_so3(a, b)

    def membership_residual(self, g) -> float:
        return _rotation_residual(g)


def _se_basis(cols: int) -> np.ndarray:
    d = 3 + cols
    mats = []
    for k in range(3):
        E = np.zeros((d, d))
        E[:3, :3] = skew(np.eye(3)[k])
        mats.append(E)
    for c in range(cols):
        for k in range(3):
            E = np.zeros((d, d))
            E[k, 3 + c] = 1.0
            mats.append(E)
    return np.array(mats)


class SEGroup(MatrixGroup):
    """SE(3) (one translation column) or SE(2,3) (velocity and position columns).

    Tangent coordinates are (delta, u_1, ..., u_cols) and the algebra element
    is [[ [delta]x, u_1, ..., u_cols ], [0, ..., 0]].
    """

    def __init__(self, cols: int):
        self.cols = cols
        self.name = "SE3" if cols == 1 else f"SE({cols},3)"
        self.basis = LieAlgebraBasis(_se_basis(cols))

    def _split(self, xi):
        xi = np.asarray(xi, dtype=float)
        return xi[..., :3], [xi[..., 3 + 3 * c: 6 + 3 * c] for c in range(self.cols)]

    def exp(self, xi) -> np.ndarray:
        delta, us = self._split(xi)
        out = np.zeros(delta.shape[:-1] + (self.d, self.d))
        out[..., :3, :3] = so3_exp(delta)
        Jl = jbar_so3(-delta)
        for c, u in enumerate(us):
            out[..., :3, 3 + c] = np.einsum("...ij,...j->...i", Jl, u)
        out[..., 3:, 3:] = np.eye(self.cols)
        return out

    def log(self, g) -> np.ndarray:
        self._check(g)
        g = np.asarray(g, dtype=float)
        delta = so3_log(g[..., :3, :3], CUT_TOL)
        W = wbar_so3(delta)
        parts = [delta] + [np.einsum("...ij,...j->...i", W, g[..., :3, 3 + c]) for c in range(self.cols)]
        return np.concatenate(parts, -1)

    def inverse(self, g) -> np.ndarray:
        self._check(g)
        g = np.asarray(g, dtype=float)
        out = np.zeros_like(g)
        Rt = np.swapaxes(g[..., :3, :3], -1, -2)
        out[..., :3, :3] = Rt
        out[..., :3, 3:] = -Rt @ g[..., :3, 3:]
        out[..., 3:, 3:] = np.eye(self.cols)
        return out

    def adbar(self, xi) -> np.ndarray:
        delta, us = self._split(xi)
        n = self.n
        out = np.zeros(delta.shape[:-1] + (n, n))
        D = skew(delta)
        for b in range(1 + self.cols):
            out[..., 3 * b:3 * b + 3, 3 * b:3 * b + 3] = D
        for c, u in enumerate(us):
            out[..., 3 + 3 * c:6 + 3 * c, :3] = skew(u)
        return out

    def wbar(self, xi) -> np.ndarray:
        delta, us = self._split(xi)
        n = self.n
        W = wbar_so3(delta)
        out = np.zeros(delta.shape[:-1] + (n, n))
        for b in range(1 + self.cols):
            out[..., 3 * b:3 * b + 3, 3 * b:3 * b + 3] = W
        for c, u in enumerate(us):
            out[..., 3 + 3 * c:6 + 3 * c, :3] = -W @ n_matrix(delta, u) @ W
        return out

    def jbar(self, xi) -> np.ndarray:
        delta, us = self._split(xi)
        n = self.n
        J = jbar_so3(delta)
        out = np.zeros(delta.shape[:-1] + (n, n))
        for b in range(1 + self.cols):
            out[..., 3 * b:3 * b + 3, 3 * b:3 * b + 3] = J
        for c, u in enumerate(us):
            out[..., 3 + 3 * c:6 + 3 * c, :3] = n_matrix(-delta, -u)
        return out

    def jbar_inv(self, xi) -> np.ndarray:
        return self.wbar(-np.asarray(xi, dtype=float))

    def membership_residual(self, g) -> float:
        g = np.asarray(g)
        rot = _rotation_residual(g[..., :3, :3])
        bottom = np.zeros((self.cols, self.d))
        bottom[:, 3:] = np.eye(self.cols)
        aff = np.abs(g[..., 3:, :] - bottom).max()
        return float(max(rot, aff))


S3 = S3Group()
SO3 = SO3Group()
SE3 = SEGroup(1)
SE23 = SEGroup(2)


# ---------------------------------------------------------------- SO(3) x R^3

@dataclass(frozen=True)
class RotBias:
    """Attitude and bias pair (R, beta) tagged with the group law in use."""

    R: np.ndarray
    beta: np.ndarray
    law: str

    def __getitem__(self, idx) -> "RotBias":
        return RotBias(self.R[idx], self.beta[idx], self.law)


class RotBiasGroup:
    """SO(3) x R^3 under the direct-product ("dp") or semidirect ("se3") law.

    Tangent coordinates are (delta, u).  Under the semidirect law the group
    is isomorphic to SE(3); under the direct-product law it is abelian in
    the bias block.
    """

    n = 6
    rot_slice = slice(0, 3)

    def __init__(self, law: str):
        if law not in ("dp", "se3"):
            raise ValueError(f"unknown law {law!r}")
        self.law = law
        self.name = f"SO3xR3[{law}]"

    def __repr__(self) -> str:
        return f"<group {self.name}>"

    def element(self, R, beta) -> RotBias:
        return RotBias(np.asarray(R, dtype=float), np.asarray(beta, dtype=float), self.law)

    def _check(self, *gs):
        for g in gs:
            if not isinstance(g, RotBias) or g.law != self.law:
                raise TagMismatch(f"expected an element under the {self.law} law")

    def identity(self) -> RotBias:
        return self.element(np.eye(3), np.zeros(3))

    def compose(self, a: RotBias, b: RotBias) -> RotBias:
        self._check(a, b)
        R = a.R @ b.R
        if self.law == "dp":
            return self.element(R, a.beta + b.beta)
        return self.element(R, a.beta + np.einsum("...ij,...j->...i", a.R, b.beta))

    def inverse(self, g: RotBias) -> RotBias:
        self._check(g)
        Rt = np.swapaxes(g.R, -1, -2)
        if self.law == "dp":
            return self.element(Rt, -g.beta)
        return self.element(Rt, -np.einsum("...ij,...j->...i", Rt, g.beta))

    def insert_axis(self, g: RotBias) -> RotBias:
        return RotBias(g.R[..., None, :, :], g.beta[..., None, :], g.law)

    def take(self, g: RotBias, idx) -> RotBias:
        return g[idx]

    def exp(self, xi) -> RotBias:
        xi = np.asarray(xi, dtype=float)
        delta, u = xi[..., :3], xi[..., 3:]
        R = so3_exp(delta)
        if self.law == "dp":
            return self.element(R, u.copy())
        return self.element(R, np.einsum("...ij,...j->...i", jbar_so3(-delta), u))

    def log(self, g: RotBias) -> np.ndarray:
        self._check(g)
        delta = so3_log(g.R, CUT_TOL)
        if self.law == "dp":
            return np.concatenate([delta, g.beta], -1)
        u = np.einsum("...ij,...j->...i", wbar_so3(delta), g.beta)
        return np.concatenate([delta, u], -1)

    def adbar(self, xi) -> np.ndarray:
        if self.law == "se3":
            return SE3.adbar(xi)
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape[:-1] + (6, 6))
        out[..., :3, :3] = skew(xi[..., :3])
        return out

    def wbar(self, xi) -> np.ndarray:
        if self.law == "se3":
            return SE3.wbar(xi)
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape[:-1] + (6, 6))
        out[..., :3, :3] = wbar_so3(xi[..., :3])
        out[..., 3:, 3:] = np.eye(3)
        return out

    def jbar(self, xi) -> np.ndarray:
        if self.law == "se3":
            return SE3.jbar(xi)
        xi = np.asarray(xi, dtype=float)
        out = np.zeros(xi.shape[:-1] + (6, 6))
        out[..., :3, :3] = jbar_so3(xi[..., :3])
        out[..., 3:, 3:] = np.eye(3)
        return out

    def jbar_inv(self, xi) -> np.ndarray:
        return self.wbar(-np.asarray(xi, dtype=float))

    def bch(self, a, b) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if self.law == "dp":
            return np.concatenate([bch_so3(a[..., :3], b[..., :3]), a[..., 3:] + b[..., 3:]], -1)
        return self.log(self.compose(self.exp(a), self.exp(b)))

    def rot_norm(self, xi) -> np.ndarray:
        return np.linalg.norm(np.asarray(xi)[..., :3], axis=-1)

    def to_matrix(self, g: RotBias) -> np.ndarray:
        """Faithful matrix embedding: 4x4 for the semidirect law, 7x7 block form for dp."""
        self._check(g)
        if self.law == "se3":
            out = np.zeros(g.R.shape[:-2] + (4, 4))
            out[..., :3, :3] = g.R
            out[..., :3, 3] = g.beta
            out[..., 3, 3] = 1.0
            return out
        out = np.zeros(g.R.shape[:-2] + (7, 7))
        out[..., :3, :3] = g.R
        out[..., 3:6, 3:6] = np.eye(3)
        out[..., 3:6, 6] = g.beta
        out[..., 6, 6] = 1.0
        return out

    def from_matrix(self, M) -> RotBias:
        M = np.asarray(M, dtype=float)
        if self.law == "se3":
            return self.element(M[..., :3, :3], M[..., :3, 3])
        return self.element(M[..., :3, :3], M[..., 3:6, 6])

    def membership_residual(self, g: RotBias) -> float:
        return _rotation_residual(g.R)


ROTBIAS_DP = RotBiasGroup("dp")
ROTBIAS_SE3 = RotBiasGroup("se3")


class TimeLawGroup:
    """SO(3) x R^3 with the time-parameterized law

    (R1, b1) o_t (R2, b2) = (R1 R2, BCH(t [R1 b2]x, t [b1]x) / t),

    which reduces to the semidirect law as t -> 0.
    """

    def __init__(self, t: float):
        if t <= 0:
            raise ValueError("t must be positive")
        self.t = float(t)
        self.law = f"t={self.t!r}"

    def element(self, R, beta) -> RotBias:
        return RotBias(np.asarray(R, dtype=float), np.asarray(beta, dtype=float), self.law)

    def _check(self, *gs):
        for g in gs:
            if not isinstance(g, RotBias) or g.law != self.law:
                raise TagMismatch(f"expected an element under the {self.law} law")

    def identity(self) -> RotBias:
        return self.element(np.eye(3), np.zeros(3))

    def compose(self, a: RotBias, b: RotBias) -> RotBias:
        self._check(a, b)
        t = self.t
        rb = np.einsum("...ij,...j->...i", a.R, b.beta)
        return self.element(a.R @ b.R, bch_so3(t * rb, t * a.beta) / t)

    def inverse(self, g: RotBias) -> RotBias:
        self._check(g)
        Rt = np.swapaxes(g.R, -1, -2)
        return self.element(Rt, -np.einsum("...ij,...j->...i", Rt, g.beta))


def group_by_name(name: str):
    table = {"S3": S3, "SO3": SO3, "SE3": SE3, "SE23": SE23,
             "dp": ROTBIAS_DP, "se3": ROTBIAS_SE3}
    return table[name]


__all__ = [
    "Quaternion", "quat_mul", "quat_to_rot", "quat_left_matrix", "ms_matrix", "reorthonormalize",
    "bch_s", "bch_so3", "MatrixGroup", "S3Group", "SO3Group", "SEGroup", "S3", "SO3", "SE3",
    "SE23", "RotBias", "RotBiasGroup", "ROTBIAS_DP", "ROTBIAS_SE3", "TimeLawGroup",
    "group_by_name", "vee",
]
