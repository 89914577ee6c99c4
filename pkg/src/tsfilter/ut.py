"""Unscented-transform sigma points and a jittered batched Cholesky."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CholeskyFail


def symmetrize(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def cholesky_jittered(P: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor, retrying once with jitter 1e-12 tr(P)/n on failure.

    Works on stacks; only the failing matrices are jittered so each member of
    a batch is factored exactly as it would be on its own.
    """
    P = np.asarray(P, dtype=float)
    try:
        return np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        pass
    n = P.shape[-1]
    flat = P.reshape(-1, n, n)
    out = np.empty_like(flat)
    for i, Pi in enumerate(flat):
        try:
            out[i] = np.linalg.cholesky(Pi)
        except np.linalg.LinAlgError:
            eps = 1e-12 * np.trace(Pi) / n
            try:
                out[i] = np.linalg.cholesky(Pi + max(eps, 0.0) * np.eye(n))
            except np.linalg.LinAlgError as exc:
                raise CholeskyFail(f"covariance #{i} is not positive definite") from exc
    return out.reshape(P.shape)


@dataclass(frozen=True)
class SigmaSet:
    points: np.ndarray   # (..., 2n+1, n)
    weights: np.ndarray  # (2n+1,)


def ut_weights(n: int, lam: float = 0.0) -> np.ndarray:
    if n + lam <= 0:
        raise ValueError("n + lambda must be positive")
    w = np.full(2 * n + 1, 0.5 / (n + lam))
    w[0] = lam / (n + lam)
    return w


def sigma_offsets(cov: np.ndarray, lam: float = 0.0) -> np.ndarray:
    """Offsets 0, +sqrt(n+lam) L_i, -sqrt(n+lam) L_i stacked on axis -2."""
    cov = np.asarray(cov, dtype=float)
    n = cov.shape[-1]
    L = cholesky_jittered(cov)
    cols = np.sqrt(n + lam) * np.swapaxes(L, -1, -2)  # rows are columns of L
    zero = np.zeros(cov.shape[:-2] + (1, n))
    return np.concatenate([zero, cols, -cols], axis=-2)


def sigma_points(mean, cov, lam: float = 0.0) -> SigmaSet:
    mean = np.asarray(mean, dtype=float)
    off = sigma_offsets(cov, lam)
    return SigmaSet(mean[..., None, :] + off, ut_weights(mean.shape[-1], lam))


def weighted_mean(values: np.ndarray, w: np.ndarray) -> np.ndarray:
    return np.einsum("s,...sn->...n", w, values)


def weighted_cov(a: np.ndarray, b: np.ndarray, w: np.ndarray) -> np.ndarray:
    """sum_i w_i a_i b_i^T for already-centred stacks."""
    return np.einsum("s,...si,...sj->...ij", w, a, b)
