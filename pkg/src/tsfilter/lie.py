"""Group-agnostic Lie algebra machinery.

Concrete groups live in :mod:`tsfilter.groups`; everything here works from a
basis of the algebra and (optionally) a group object providing exp/log.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import expm

from .errors import NotADerivation, NotInAlgebra, NotNormalCommuting, Singular


@dataclass(frozen=True)
class LieAlgebraBasis:
    """Basis E_1..E_n of a matrix Lie algebra, stacked with shape (n, d, d)."""

    mats: np.ndarray
    _pinv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        mats = np.asarray(self.mats, dtype=float)
        object.__setattr__(self, "mats", mats)
        flat = mats.reshape(len(mats), -1).T
        if np.linalg.matrix_rank(flat) != len(mats):
            raise ValueError("basis matrices are linearly dependent")
        object.__setattr__(self, "_pinv", np.linalg.pinv(flat))
        # closure of the bracket
        for i in range(self.n):
            for j in range(i + 1, self.n):
                self.vectorize(mats[i] @ mats[j] - mats[j] @ mats[i])

    @property
    def n(self) -> int:
        return self.mats.shape[0]

    @property
    def d(self) -> int:
        return self.mats.shape[1]

    def matrize(self, xi) -> np.ndarray:
        return np.tensordot(np.asarray(xi, dtype=float), self.mats, axes=([-1], [0]))

    def vectorize(self, X, tol: float = 1e-9) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        flat = X.reshape(X.shape[:-2] + (-1,))
        xi = flat @ self._pinv.T
        resid = np.abs(self.matrize(xi) - X).max(initial=0.0)
        if resid > tol * max(1.0, np.abs(X).max(initial=0.0)):
            raise NotInAlgebra(f"projection residual {resid:.3g}")
        return xi

    def bracket(self, a, b) -> np.ndarray:
        A, B = self.matrize(a), self.matrize(b)
        return self.vectorize(A @ B - B @ A)

    def structure_constants(self) -> np.ndarray:
        """c[i, j, k] with [E_i, E_j] = sum_k c[i, j, k] E_k."""
        E = self.mats
        return self.vectorize(np.einsum("iab,jbc->ijac", E, E) - np.einsum("jab,ibc->ijac", E, E))


def adbar_from_basis(basis: LieAlgebraBasis, xi) -> np.ndarray:
    """Matrix of v -> vectorize([M(xi), M(v)]) built from structure constants."""
    c = basis.structure_constants()
    return np.einsum("...i,ijk->...kj", np.asarray(xi, dtype=float), c)


def _phi_series(ad: np.ndarray, sign: float) -> np.ndarray:
    """sum_k (sign * ad)^k / (k+1)!, stopping once a term drops below 1e-16."""
    n = ad.shape[-1]
    term = np.broadcast_to(np.eye(n), ad.shape).copy()
    total = term.copy()
    for k in range(1, 200):
        term = sign * (term @ ad) / (k + 1)
        total = total + term
        if np.abs(term).max(initial=0.0) < 1e-16:
            break
    return total


def jbar_series(ad: np.ndarray) -> np.ndarray:
    """Integral of exp(-s ad) over [0, 1] by its power series."""
    return _phi_series(np.asarray(ad, dtype=float), -1.0)


def wbar_series(ad: np.ndarray) -> np.ndarray:
    """Inverse of the integral of exp(s ad) over [0, 1] by its power series."""
    S = _phi_series(np.asarray(ad, dtype=float), 1.0)
    if np.any(1.0 / np.linalg.cond(S) < 1e-13):
        raise Singular("the exp-map Jacobian is singular")
    return np.linalg.inv(S)


def group_affine_defect(f: Callable[[np.ndarray], np.ndarray], g1, g2, identity=None) -> float:
    """Max-abs residual of f(g1 g2) - f(g1) g2 - g1 f(g2) + g1 f(I) g2."""
    g1 = np.asarray(g1, dtype=float)
    g2 = np.asarray(g2, dtype=float)
    I = np.eye(g1.shape[-1]) if identity is None else identity
    r = f(g1 @ g2) - f(g1) @ g2 - g1 @ f(g2) + g1 @ f(I) @ g2
    return float(np.abs(r).max())


@dataclass(frozen=True)
class CharacterizedField:
    """A group-affine field f(e^X) = e^X J(X) D X + e^X Y1 + Y2 e^X.

    ``D`` is the derivation in vectorized form, ``Y1`` and ``Y2`` are tangent
    vectors and ``group`` supplies log, jbar, adbar and the basis.
    """

    group: object
    D: np.ndarray
    Y1: np.ndarray
    Y2: np.ndarray

    def __post_init__(self):
        D = np.asarray(self.D, dtype=float)
        n = self.group.n
        eye = np.eye(n)
        worst = 0.0
        for i in range(n):
            for j in range(n):
                lhs = D @ self.group.adbar(eye[i]) @ eye[j]
                rhs = self.group.adbar(D @ eye[i]) @ eye[j] + self.group.adbar(eye[i]) @ (D @ eye[j])
                worst = max(worst, float(np.abs(lhs - rhs).max()))
        if worst > 1e-9:
            raise NotADerivation(f"derivation law residual {worst:.3g}")
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "Y1", np.asarray(self.Y1, dtype=float))
        object.__setattr__(self, "Y2", np.asarray(self.Y2, dtype=float))

    def __call__(self, g) -> np.ndarray:
        M = self.group.basis.matrize
        xi = self.group.log(g)
        inner = self.group.jbar(xi) @ (self.D @ xi)
        return g @ M(inner) + g @ M(self.Y1) + M(self.Y2) @ g

    def generator(self) -> np.ndarray:
        return self.D + self.group.adbar(self.Y2)


def tangent_linear_generator(cf: CharacterizedField) -> np.ndarray:
    """Generator of the linear tangent flow of a characterized field."""
    return cf.generator()


def _check_normal_commuting(A):
    Ap = np.linalg.pinv(A)
    if np.abs(A @ Ap - Ap @ A).max(initial=0.0) > 1e-9:
        raise NotNormalCommuting("matrix does not commute with its pseudo-inverse")
    return Ap


def int_exp(A) -> np.ndarray:
    """Integral of exp(-s A) over [0, 1] via the kernel projection."""
    A = np.asarray(A, dtype=float)
    Ap = _check_normal_commuting(A)
    n = A.shape[-1]
    proj = np.eye(n) - Ap @ A
    return proj + (np.eye(n) - expm(-A)) @ Ap


def int_s_exp(A) -> np.ndarray:
    """Integral of s exp(-s A) over [0, 1] via the kernel projection."""
    A = np.asarray(A, dtype=float)
    Ap = _check_normal_commuting(A)
    n = A.shape[-1]
    proj = np.eye(n) - Ap @ A
    E = expm(-A)
    # int s e^{-sA} = A^#(I - e^{-A})A^# - A^# e^{-A} on the range
    return 0.5 * proj + Ap @ (np.eye(n) - E) @ Ap - E @ Ap


def gauss_legendre01(nodes: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def bch_series(X, Y, order: int = 3) -> np.ndarray:
    """Truncated BCH series for matrices (terms up to degree ``order`` <= 4)."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)

    def br(a, b):
        return a @ b - b @ a

    out = X + Y
    if order >= 2:
        out = out + 0.5 * br(X, Y)
    if order >= 3:
        out = out + (br(X, br(X, Y)) - br(Y, br(X, Y))) / 12.0
    if order >= 4:
        out = out - br(Y, br(X, br(X, Y))) / 24.0
    return out
