"""Unscented measurement update for concentrated Gaussian priors."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cg import ConcentratedGaussian, OffsetGaussian
from .errors import SingularInnovation
from .groups import S3Group, RotBias
from .ut import sigma_offsets, symmetrize, ut_weights


@dataclass(frozen=True)
class MeasurementModel:
    """z = h(g) + w with w ~ N(0, R).  ``h`` must accept batches of elements."""

    dim: int
    h: Callable
    R: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.R, dtype=float)
        if R.shape[-2:] != (self.dim, self.dim):
            raise ValueError(f"noise covariance must be {self.dim}x{self.dim}")
        if np.abs(R - np.swapaxes(R, -1, -2)).max() > 1e-12 * max(1.0, np.abs(R).max()):
            raise ValueError("noise covariance is not symmetric")
        try:
            np.linalg.cholesky(R)
        except np.linalg.LinAlgError as exc:
            raise ValueError("noise covariance is not positive definite") from exc
        object.__setattr__(self, "R", R)


def attitude_of(g) -> np.ndarray:
    """Rotation block of an attitude-carrying element (S^3, SO(3), SE(n,3) or SO(3) x R^3)."""
    if isinstance(g, RotBias):
        return g.R
    g = np.asarray(g)
    if g.shape[-2:] == (4, 4):
        # quaternion left-multiplication matrices have a constant diagonal s and
        # an antisymmetric border; the only SE(3) element of that form is I
        diag = np.diagonal(g, axis1=-2, axis2=-1)
        if np.allclose(diag, diag[..., :1]) and np.allclose(g[..., 3, :3], -g[..., :3, 3]):
            return S3Group.rotation(g)
    return g[..., :3, :3]


def magnetometer_h(g, B) -> np.ndarray:
    """Body-frame field R B for the inertial field B."""
    R = attitude_of(g)
    return np.einsum("...ij,...j->...i", R, np.asarray(B, dtype=float))


def ut_update_arrays(group, mu, P, z, h: Callable, R, lam: float = 0.0, joseph: bool = False):
    """Batched update kernel.

    ``mu`` is a batch of B elements, ``P`` is (B, n, n), ``z`` is (B, d) and
    ``h`` maps a (B, S) batch of elements to (B, S, d).  Returns the tangent
    offsets (B, n) and posterior covariances (B, n, n).
    """
    P = np.asarray(P, dtype=float)
    n = P.shape[-1]
    w = ut_weights(n, lam)
    sig = sigma_offsets(P, lam)
    g = group.compose(group.exp(sig), group.insert_axis(mu))
    nu = h(g)
    zhat = np.einsum("s,...si->...i", w, nu)
    dz = nu - zhat[..., None, :]
    Pzz = np.einsum("s,...si,...sj->...ij", w, dz, dz) + R
    Pxz = np.einsum("s,...si,...sj->...ij", w, sig, dz)
    if np.any(1.0 / np.linalg.cond(Pzz) < 1e-14):
        raise SingularInnovation("innovation covariance is singular")
    K = np.swapaxes(np.linalg.solve(np.swapaxes(Pzz, -1, -2), np.swapaxes(Pxz, -1, -2)), -1, -2)
    xi_hat = np.einsum("...ij,...j->...i", K, np.asarray(z, dtype=float) - zhat)
    if joseph:
        # equivalent Joseph form written with the sigma-point cross covariance
        KPzx = K @ np.swapaxes(Pxz, -1, -2)
        Pnew = P - KPzx - np.swapaxes(KPzx, -1, -2) + K @ Pzz @ np.swapaxes(K, -1, -2)
    else:
        Pnew = P - K @ Pzz @ np.swapaxes(K, -1, -2)
    return xi_hat, symmetrize(Pnew)


def ut_update(cg: ConcentratedGaussian, z, mm: MeasurementModel, lam: float = 0.0,
              joseph: bool = False) -> OffsetGaussian:
    """Condition ``cg`` on z.  The group mean is unchanged; whiten the result."""
    group = cg.group
    mu = cg.mu
    mu_b = RotBias(mu.R[None], mu.beta[None], mu.law) if isinstance(mu, RotBias) else np.asarray(mu)[None]
    xi_hat, P = ut_update_arrays(group, mu_b, cg.sigma[None], np.asarray(z, dtype=float)[None],
                                 mm.h, mm.R, lam, joseph)
    return OffsetGaussian(group, mu, xi_hat[0], P[0])
