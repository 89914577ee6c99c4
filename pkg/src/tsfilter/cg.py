"""Concentrated Gaussians g = exp(xi) mu with xi ~ N(0, Sigma).

The ``*_arrays`` functions are the batched kernels used by the simulator;
the dataclass API wraps them for single distributions.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CholeskyFail, NoConvergence
from .ut import sigma_offsets, symmetrize, ut_weights, weighted_cov

FAST_PATH_NORM = 1e-6


@dataclass(frozen=True)
class ConcentratedGaussian:
    group: object
    mu: object
    sigma: np.ndarray

    def __post_init__(self):
        S = np.asarray(self.sigma, dtype=float)
        if S.shape != (self.group.n, self.group.n):
            raise ValueError(f"covariance must be {self.group.n}x{self.group.n}")
        if np.abs(S - S.T).max() > 1e-12 * max(1.0, np.abs(S).max()):
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "sigma", S)


@dataclass(frozen=True)
class OffsetGaussian:
    group: object
    mu: object
    xi_hat: np.ndarray
    sigma: np.ndarray


@dataclass(frozen=True)
class WhitenResult:
    cg: ConcentratedGaussian
    iterations: int
    mean_norm: float


def sample(cg: ConcentratedGaussian, rng: np.random.Generator, size: int | None = None):
    """Draw group elements exp(xi) mu with xi ~ N(0, Sigma)."""
    n = cg.group.n
    shape = () if size is None else (size,)
    if np.all(cg.sigma == 0):
        L = np.zeros((n, n))
    else:
        try:
            L = np.linalg.cholesky(cg.sigma)
        except np.linalg.LinAlgError as exc:
            raise CholeskyFail("covariance is not positive definite") from exc
    xi = rng.standard_normal(shape + (n,)) @ L.T
    return cg.group.compose(cg.group.exp(xi), cg.mu)


def chi2_arrays(group, mu, sigma, g_true) -> np.ndarray:
    """(1/n) l^T Sigma^-1 l with l = log(g_true mu^-1); broadcasts over batches."""
    ell = group.log(group.compose(g_true, group.inverse(mu)))
    sol = np.linalg.solve(sigma, ell[..., None])[..., 0]
    return np.einsum("...i,...i->...", ell, sol) / group.n


def chi2(cg: ConcentratedGaussian, g_true) -> float:
    return float(chi2_arrays(cg.group, cg.mu, cg.sigma, g_true))


def _shift_mean(group, a, P, lam, w):
    """UT mean of BCH(xi, -a) for xi ~ N(a, P)."""
    off = sigma_offsets(P, lam)
    pts = a[..., None, :] + off
    small = np.linalg.norm(a, axis=-1) < FAST_PATH_NORM
    a_b = a[..., None, :]
    out = np.empty_like(a)
    if np.any(small):
        # first order BCH(xi, -a) ~ xi - jbar(xi)^-1 a; the symmetric offsets
        # average to zero, leaving only the curvature of jbar^-1
        Jinv = group.jbar_inv(pts[small])
        corr = np.einsum("...sij,...sj->...si", Jinv - np.eye(group.n), a_b[small])
        out[small] = -np.einsum("s,...si->...i", w, corr)
    big = ~small
    if np.any(big):
        tau = group.bch(pts[big], np.broadcast_to(-a_b[big], pts[big].shape))
        out[big] = np.einsum("s,...si->...i", w, tau)
    return out


def whiten_arrays(group, mu, xi_hat, P, tol: float = 1e-15, max_iter: int = 50, lam: float = 0.0):
    """Batched whitening.  ``xi_hat`` is (B, n), ``P`` is (B, n, n), ``mu`` a batch of B elements.

    Returns (mu, P, iterations, mean_norms) with (B,) arrays for the last two.
    """
    xi_hat = np.array(xi_hat, dtype=float)
    P = np.array(P, dtype=float)
    w = ut_weights(group.n, lam)
    iters = np.zeros(xi_hat.shape[0], dtype=int)
    active = np.linalg.norm(xi_hat, axis=-1) > tol
    mu_list = mu
    for _ in range(max_iter):
        if not np.any(active):
            break
        idx = np.flatnonzero(active)
        a = xi_hat[idx]
        Pa = P[idx]
        new_mean = _shift_mean(group, a, Pa, lam, w)
        Jinv = group.jbar_inv(a)
        P[idx] = symmetrize(Jinv @ Pa @ np.swapaxes(Jinv, -1, -2))
        mu_list = _update_mu(group, mu_list, idx, group.exp(a))
        xi_hat[idx] = new_mean
        iters[idx] += 1
        active = np.linalg.norm(xi_hat, axis=-1) > tol
    norms = np.linalg.norm(xi_hat, axis=-1)
    if np.any(active):
        raise NoConvergence(f"whitening left a tangent mean of norm {norms.max():.3g} "
                            f"after {max_iter} iterations")
    return mu_list, P, iters, norms


def _update_mu(group, mu, idx, shift):
    """mu[idx] <- shift * mu[idx] for ndarray or RotBias batches."""
    sub = group.take(mu, idx)
    new = group.compose(shift, sub)
    if isinstance(mu, np.ndarray):
        out = mu.copy()
        out[idx] = new
        return out
    R = mu.R.copy()
    beta = mu.beta.copy()
    R[idx] = new.R
    beta[idx] = new.beta
    return type(mu)(R, beta, mu.law)


def _stack1(group, mu):
    if isinstance(mu, np.ndarray):
        return mu[None]
    return type(mu)(mu.R[None], mu.beta[None], mu.law)


def whiten_report(og: OffsetGaussian, tol: float = 1e-15, max_iter: int = 50, lam: float = 0.0) -> WhitenResult:
    group = og.group
    mu, P, iters, norms = whiten_arrays(group, _stack1(group, og.mu), np.asarray(og.xi_hat, dtype=float)[None],
                                 np.asarray(og.sigma, dtype=float)[None], tol, max_iter, lam)
    mu1 = group.take(mu, 0)
    cg = ConcentratedGaussian(group, mu1, P[0])
    return WhitenResult(cg, int(iters[0]), float(norms[0]))


def whiten(og: OffsetGaussian, tol: float = 1e-15, max_iter: int = 50, lam: float = 0.0) -> ConcentratedGaussian:
    """Move the tangent mean of an offset Gaussian into its group mean."""
    return whiten_report(og, tol, max_iter, lam).cg


def transport_law(cg: ConcentratedGaussian, target, lam: float = 0.0) -> ConcentratedGaussian:
    """Re-express a covariance in the tangent coordinates of another group law.

    Both groups must act on the same underlying points; the mean element is
    kept and the covariance is moment-matched through sigma points.
    """
    src = cg.group
    n = src.n
    off = sigma_offsets(cg.sigma, lam) if np.any(cg.sigma) else np.zeros((2 * n + 1, n))
    w = ut_weights(n, lam)
    g = src.compose(src.exp(off), cg.mu)
    mu_t = target.element(cg.mu.R, cg.mu.beta) if hasattr(target, "element") else cg.mu
    g_t = target.element(g.R, g.beta) if hasattr(target, "element") else g
    y = target.log(target.compose(g_t, target.inverse(mu_t)))
    ybar = np.einsum("s,si->i", w, y)
    cov = symmetrize(weighted_cov(y - ybar, y - ybar, w))
    return ConcentratedGaussian(target, mu_t, cov)
