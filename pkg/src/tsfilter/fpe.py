"""Reference solutions for the attitude diffusion on the unit quaternions.

* the heat kernel of (1/2) Laplacian on S^3 as a density in exponential
  coordinates (winding sum for short times, spectral sum for long times);
* convolution of an initial density against that kernel on a
  radial x Lebedev product grid;
* a Stratonovich Heun Monte-Carlo integrator usable for any ``SdeModel``.

Kernel time is measured in units where Q_eta = I.  For ``model_su2`` with
Q_eta = q^2 I the diffusion matrix is W_s/2, so physical time t maps to
kernel time q^2 t / 4 (see :func:`kernel_time`).
"""
from __future__ import annotations

import argparse
import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import lebedev_rule

from .errors import PathEscape
from .lie import gauss_legendre01
from .propagation import Moments, SdeModel

TAIL_TOL = 1e-14
SPECTRAL_ABOVE = 1.0


def kernel_time(q: float, t_phys: float) -> float:
    """Kernel time of ``model_su2`` with isotropic noise q^2 I after t_phys seconds."""
    return q * q * t_phys / 4.0


def volume_factor(r) -> np.ndarray:
    """sin(r)^2 / r^2, the Haar density in exponential coordinates."""
    return np.sinc(np.asarray(r, dtype=float) / np.pi) ** 2


def winding_cutoff(t: float) -> int:
    """Smallest N whose first omitted winding term is below ``TAIL_TOL``."""
    N = 1
    while np.exp(-(np.pi * (2 * N - 1)) ** 2 / (2 * t)) * np.pi * (2 * N + 1) / t ** 1.5 >= TAIL_TOL:
        N += 1
    return N


def _haar_winding(t: float, r: np.ndarray, N: int) -> np.ndarray:
    n = np.arange(-N, N + 1)
    a = 2.0 * np.pi * n
    pref = np.exp(t / 2.0) / (2.0 * np.pi * t) ** 1.5
    x = r[..., None] + a
    s = np.sum(x * np.exp(-x * x / (2.0 * t)), axis=-1)
    out = np.empty_like(r)
    small = r < 1e-12
    big = ~small
    out[big] = s[big] / np.sin(r[big])
    # r -> 0: derivative of x exp(-x^2/2t) at each winding
    out[small] = np.sum(np.exp(-a * a / (2.0 * t)) * (1.0 - a * a / t))
    return pref * out


def _haar_spectral(t: float, r: np.ndarray) -> np.ndarray:
    # sum_m m U_{m-1}(cos r) exp(-(m^2 - 1) t / 2) / (2 pi^2)
    c = np.cos(r)
    u_prev = np.zeros_like(r)
    u = np.ones_like(r)
    total = np.zeros_like(r)
    m = 1
    while True:
        decay = np.exp(-(m * m - 1) * t / 2.0)
        total += m * u * decay
        if m > 2 and m * m * decay < 1e-17:
            break
        u_prev, u = u, 2.0 * c * u - u_prev
        m += 1
    return total / (2.0 * np.pi ** 2)


def haar_heat_kernel(t: float, r, N: Optional[int] = None) -> np.ndarray:
    """Heat kernel of (1/2) Laplacian on S^3 w.r.t. the Riemannian volume, at distance r."""
    if t <= 0:
        raise ValueError("kernel time must be positive")
    r = np.abs(np.asarray(r, dtype=float))
    if N is None and t > SPECTRAL_ABOVE:
        return _haar_spectral(t, r)
    return _haar_winding(t, r, winding_cutoff(t) if N is None else int(N))


def heat_kernel(t: float, xi, N: Optional[int] = None) -> np.ndarray:
    """Density of the kernel on the ball of radius pi in exponential coordinates."""
    r = np.linalg.norm(np.asarray(xi, dtype=float), axis=-1)
    return volume_factor(r) * haar_heat_kernel(t, r, N)


def heat_kernel_radial(t: float, r, N: Optional[int] = None) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    return volume_factor(r) * haar_heat_kernel(t, r, N)


def gaussian_density(t: float, xi) -> np.ndarray:
    r2 = np.sum(np.asarray(xi, dtype=float) ** 2, axis=-1)
    return np.exp(-r2 / (2.0 * t)) / (2.0 * np.pi * t) ** 1.5


def _compose(a, b):
    """log(e^a e^b) on S^3 and its norm, without the cut-locus check.

    Compositions landing at -1 get an arbitrary direction (e_x) but keep
    their angle; the kernel only sees the angle there.
    """
    ra = np.linalg.norm(a, axis=-1)
    rb = np.linalg.norm(b, axis=-1)
    va = a * np.sinc(ra / np.pi)[..., None]
    vb = b * np.sinc(rb / np.pi)[..., None]
    ca, cb = np.cos(ra), np.cos(rb)
    vec = ca[..., None] * vb + cb[..., None] * va - np.cross(va, vb)
    scal = ca * cb - np.einsum("...i,...i->...", va, vb)
    nv = np.linalg.norm(vec, axis=-1)
    r = np.arctan2(nv, scal)
    safe = nv > 0
    axis = np.where(safe[..., None], vec / np.where(safe, nv, 1.0)[..., None], np.array([1.0, 0.0, 0.0]))
    return axis * r[..., None], r


# ---------------------------------------------------------------- grids

@dataclass(frozen=True)
class SphericalGrid:
    """Product grid on a ball: Gauss-Legendre in r times a Lebedev sphere rule."""

    nodes: np.ndarray    # (N, 3)
    weights: np.ndarray  # (N,)
    radius: float

    @classmethod
    def build(cls, radius: float = np.pi, n_radial: int = 48, order: int = 17) -> "SphericalGrid":
        r, wr = gauss_legendre01(n_radial)
        r = r * radius
        wr = wr * radius * r * r
        dirs, wa = lebedev_rule(order)
        nodes = (r[:, None, None] * dirs.T[None, :, :]).reshape(-1, 3)
        weights = (wr[:, None] * wa[None, :]).ravel()
        return cls(nodes, weights, float(radius))

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))


def _points(grid: SphericalGrid, points):
    return grid.nodes if points is None else np.asarray(points, dtype=float)


def convolve_propagate(p0: Union[Callable, np.ndarray], t: float, grid: Optional[SphericalGrid] = None,
                       points=None, over: str = "initial", chunk: int = 256) -> np.ndarray:
    """Evolve a density in exponential coordinates by group convolution with the kernel.

    p(xi) = h(xi) * integral K(t, z) p0(delta) / h(z) d delta,  z = log(e^xi e^-delta),

    where h is :func:`volume_factor` (the ratio converts between Lebesgue and
    Haar densities).  With ``over="initial"`` the integral runs over the grid
    in delta, and ``p0`` may be grid values or a callable.  With
    ``over="kernel"`` it runs over z on a grid scaled to the kernel width and
    ``p0`` must be callable; use this when p0 is broader than the kernel.
    Returns values at ``points`` (default: the grid nodes).
    """
    pts = None
    if over == "initial":
        grid = SphericalGrid.build() if grid is None else grid
        pts = _points(grid, points)
        vals = p0(grid.nodes) if callable(p0) else np.asarray(p0, dtype=float)
        src = grid.nodes
        wq = grid.weights * vals
        out = np.empty(len(pts))
        for i in range(0, len(pts), chunk):
            xi = pts[i:i + chunk]
            _, rz = _compose(xi[:, None, :], -src[None, :, :])
            out[i:i + chunk] = haar_heat_kernel(t, rz) @ wq
        return volume_factor(np.linalg.norm(pts, axis=-1)) * out
    if over == "kernel":
        if not callable(p0):
            raise ValueError("kernel-centred quadrature needs a callable initial density")
        pts = _points(SphericalGrid.build() if grid is None else grid, points)
        kgrid = SphericalGrid.build(radius=min(np.pi, 12.0 * np.sqrt(t)))
        zs = kgrid.nodes
        wk = kgrid.weights * heat_kernel(t, zs)
        out = np.empty(len(pts))
        for i in range(0, len(pts), chunk):
            xi = pts[i:i + chunk]
            d, rd = _compose(-zs[None, :, :], xi[:, None, :])
            hd = volume_factor(rd)
            f = np.where(hd > 1e-300, p0(d) / np.maximum(hd, 1e-300), 0.0)
            out[i:i + chunk] = f @ wk
        return volume_factor(np.linalg.norm(pts, axis=-1)) * out
    raise ValueError(f"unknown quadrature mode {over!r}")


# ---------------------------------------------------------------- Monte Carlo

@dataclass(frozen=True)
class McResult:
    moments: Moments
    mean_se: np.ndarray
    cov_se: np.ndarray
    paths: int
    escaped: int
    samples: Optional[np.ndarray] = None


def _block_size(paths: int) -> int:
    return max(1, min(1000, paths // 20))


def mc_oracle(model: SdeModel, m0: Moments, t_span, dt: float, paths: int, seed: int,
              drop_escaped: bool = False, keep_samples: bool = False) -> McResult:
    """Stratonovich Heun integration of the tangent SDE over many paths.

    Paths are processed in fixed blocks; block b draws from the stream keyed
    by (seed, b), so results do not depend on how blocks are scheduled.
    Standard errors come from a delete-one-block jackknife.
    """
    if paths < 1000:
        raise ValueError("the Monte-Carlo oracle needs at least 1000 paths")
    t0, t1 = t_span
    steps = max(1, int(np.ceil((t1 - t0) / dt - 1e-9)))
    h = (t1 - t0) / steps
    sqh = np.sqrt(h)
    n = model.n
    LQ = np.linalg.cholesky(model.Q) if np.any(model.Q) else np.zeros_like(model.Q)
    L0 = np.linalg.cholesky(m0.cov) if np.any(m0.cov) else np.zeros((n, n))
    bs = _block_size(paths)
    starts = list(range(0, paths, bs))
    s1, s2, counts, kept = [], [], [], []
    escaped = 0
    for b, start in enumerate(starts):
        size = min(bs, paths - start)
        rng = np.random.default_rng([seed, b])
        xi = np.asarray(m0.mean, dtype=float) + rng.standard_normal((size, n)) @ L0.T
        alive = model.rot_norm(xi) < np.pi
        for _ in range(steps):
            dw = (rng.standard_normal((size, model.m)) @ LQ.T) * sqh
            x = xi[alive]
            f0 = model.drift(x)
            G0 = model.diffusion(x)
            dwa = dw[alive]
            pred = x + f0 * h + np.einsum("...ij,...j->...i", G0, dwa)
            f1 = model.drift(pred)
            G1 = model.diffusion(pred)
            xi[alive] = x + 0.5 * (f0 + f1) * h + np.einsum("...ij,...j->...i", 0.5 * (G0 + G1), dwa)
            alive &= model.rot_norm(xi) < np.pi
        escaped += int(np.count_nonzero(~alive))
        good = xi[alive]
        s1.append(good.sum(0))
        s2.append(good.T @ good)
        counts.append(len(good))
        if keep_samples:
            kept.append(good)
    if escaped and not drop_escaped:
        raise PathEscape(f"{escaped} of {paths} paths reached the cut locus", escaped)
    s1 = np.array(s1)
    s2 = np.array(s2)
    counts = np.array(counts, dtype=float)

    def estimate(S1, S2, N):
        mean = S1 / N
        cov = (S2 - N * np.outer(mean, mean)) / (N - 1.0)
        return mean, cov

    mean, cov = estimate(s1.sum(0), s2.sum(0), counts.sum())
    B = len(starts)
    if B > 1:
        jm = np.empty((B, n))
        jc = np.empty((B, n, n))
        for b in range(B):
            jm[b], jc[b] = estimate(s1.sum(0) - s1[b], s2.sum(0) - s2[b], counts.sum() - counts[b])
        f = (B - 1.0) / B
        mean_se = np.sqrt(f * np.sum((jm - jm.mean(0)) ** 2, axis=0))
        cov_se = np.sqrt(f * np.sum((jc - jc.mean(0)) ** 2, axis=0))
    else:
        mean_se = np.full(n, np.nan)
        cov_se = np.full((n, n), np.nan)
    samples = np.concatenate(kept) if keep_samples else None
    return McResult(Moments(mean, 0.5 * (cov + cov.T)), mean_se, cov_se, paths, escaped, samples)


# ---------------------------------------------------------------- CSV and CLI

def write_kernel_csv(path, times, radii) -> None:
    """Rows of (t, r, K, Gaussian) for each kernel time and radius."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "r", "kernel", "gaussian"])
        for t in times:
            K = heat_kernel_radial(t, radii)
            G = np.exp(-np.asarray(radii) ** 2 / (2 * t)) / (2 * np.pi * t) ** 1.5
            for r, k, g in zip(radii, K, G):
                w.writerow([repr(float(t)), repr(float(r)), repr(float(k)), repr(float(g))])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description="Tabulate the S^3 heat kernel in exponential coordinates.")
    ap.add_argument("--t", type=float, nargs="+", default=[0.01, 0.1, 1.0], help="kernel times")
    ap.add_argument("--points", type=int, default=200, help="radial samples on [0, pi)")
    ap.add_argument("--out", type=Path, default=Path("heat_kernel.csv"))
    ap.add_argument("--plot", action="store_true", help="also write a PNG next to the CSV")
    args = ap.parse_args(argv)
    radii = np.linspace(0.0, np.pi, args.points, endpoint=False)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_kernel_csv(args.out, args.t, radii)
    if args.plot:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
        fig, ax = plt.subplots(figsize=(6, 4))
        for t in args.t:
            ax.plot(radii, 4 * np.pi * radii ** 2 * heat_kernel_radial(t, radii), label=f"t = {t:g}")
        ax.set_xlabel("|xi| (rad)")
        ax.set_ylabel("radial density")
        ax.legend()
        fig.tight_layout()
        fig.savefig(args.out.with_suffix(".png"), dpi=120)
        plt.close(fig)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
