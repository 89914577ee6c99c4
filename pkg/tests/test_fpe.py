import csv

import numpy as np
import pytest
from scipy.integrate import quad

import oracles as orc
from tsfilter.errors import PathEscape
from tsfilter.fpe import (SphericalGrid, _haar_spectral, _haar_winding, convolve_propagate, gaussian_density,
                          haar_heat_kernel, heat_kernel, heat_kernel_radial, kernel_time, main, mc_oracle, volume_factor, winding_cutoff)
from tsfilter.groups import S3
from tsfilter.propagation import Moments, SdeModel, model_su2


def test_kernel_time_mapping():
    assert kernel_time(0.1, 1.0) == pytest.approx(0.0025)


def test_kernel_is_finite_and_continuous_at_origin():
    for t in (0.01, 0.3, 2.0):
        k0 = heat_kernel(t, np.zeros(3))
        k1 = heat_kernel(t, [1e-7, 0, 0])
        assert np.isfinite(k0) and k0 > 0
        assert k1 == pytest.approx(k0, rel=1e-10)


def test_kernel_nonnegative_and_winding_tail(rng):
    r = np.linspace(0, np.pi - 1e-9, 400)
    for t in (1e-3, 0.05, 0.7, 3.0):
        assert np.all(heat_kernel_radial(t, r) >= 0)
    N = winding_cutoff(0.7)
    assert np.allclose(haar_heat_kernel(0.7, r, N), haar_heat_kernel(0.7, r, N + 3), rtol=1e-13, atol=1e-300)


def test_winding_and_spectral_sums_agree():
    # the winding form divides by sin r, so stay a little away from the antipode
    r = np.linspace(0, np.pi - 1e-3, 200)
    for t in (0.6, 1.0, 1.5, 3.0):
        wind = _haar_winding(t, r, winding_cutoff(t))
        spectral = _haar_spectral(t, r)
        assert np.abs(wind - spectral).max() < 1e-12 * wind.max()


def test_long_time_limit_is_uniform():
    r = np.linspace(0, np.pi - 1e-6, 300)
    uniform = volume_factor(r) / (2 * np.pi ** 2)
    assert np.abs(heat_kernel_radial(50.0, r) - uniform).max() < 1e-4


def test_radial_normalization_by_adaptive_quadrature():
    for t in (0.01, 0.1, 1.0):
        total, _ = quad(lambda r: 4 * np.pi * r * r * heat_kernel_radial(t, r), 0, np.pi, limit=200,
                        epsabs=1e-13, epsrel=1e-13, points=[min(np.pi, 8 * np.sqrt(t))])
        assert total == pytest.approx(1.0, abs=1e-9)


def test_kernel_approaches_gaussian_as_t_shrinks():
    xi = np.array([0.02, -0.01, 0.03])
    errs = [abs(heat_kernel(t, xi) / gaussian_density(t, xi) - 1) for t in (1e-2, 1e-3, 1e-4)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 2e-4


def test_round_metric_from_diffusion(rng):
    for _ in range(20):
        xi = orc.random_tangent(rng, 3, 0.01, 3.0)
        r = np.linalg.norm(xi)
        e = xi / r
        Pr = np.outer(e, e)
        metric = Pr + (np.sin(r) / r) ** 2 * (np.eye(3) - Pr)
        W = S3.wbar(xi)
        assert np.abs(np.linalg.inv(W @ W.T) - metric).max() < 1e-10


def test_divergence_identity(rng):
    for _ in range(20):
        xi = orc.random_tangent(rng, 3, 0.05, 3.0)
        r = np.linalg.norm(xi)
        kappa = r / np.tan(r)
        dW = orc.fd_jacobian(S3.wbar, xi, 1e-6)          # [i, row, col]
        div = np.einsum("iij->j", dW)
        assert np.abs(div - 2 * (1 - kappa) * xi / r ** 2).max() < 1e-6


def test_grid_integrates_polynomials():
    grid = SphericalGrid.build(radius=2.0, n_radial=16, order=11)
    assert grid.integrate(np.ones(len(grid.nodes))) == pytest.approx(4 / 3 * np.pi * 8, rel=1e-13)
    r2 = np.sum(grid.nodes ** 2, axis=1)
    assert grid.integrate(r2) == pytest.approx(4 * np.pi * 2 ** 5 / 5, rel=1e-13)


def test_convolution_short_time_is_identity():
    grid = SphericalGrid.build()
    p0 = lambda x: heat_kernel(0.05, x)
    pts = np.array([[0.0, 0, 0], [0.2, 0.1, 0], [0.0, 0.4, -0.3]])
    out = convolve_propagate(p0, 1e-4, grid, pts, over="kernel")
    assert np.allclose(out, p0(pts), rtol=5e-3)


def test_convolution_of_narrow_start_gives_kernel():
    """A nearly point-like start spreads into the kernel; quadrature over the initial density."""
    grid = SphericalGrid.build()
    s, t = 1e-3, 0.2
    pts = grid.nodes[::37]
    out = convolve_propagate(lambda x: heat_kernel(s, x), t, grid, pts, over="initial")
    ref = heat_kernel(s + t, pts)
    assert np.abs(out - ref).max() < 1e-4 * ref.max()


def test_convolution_of_broad_start_with_narrow_kernel():
    grid = SphericalGrid.build()
    s, t = 0.3, 0.01
    pts = grid.nodes[::37]
    out = convolve_propagate(lambda x: heat_kernel(s, x), t, grid, pts, over="kernel")
    ref = heat_kernel(s + t, pts)
    assert np.abs(out - ref).max() < 1e-10 * ref.max()


def test_convolution_at_the_antipode_is_finite():
    """Compositions landing on -1 keep their angle, so the Haar ratio stays bounded."""
    pts = np.array([[np.pi - 1e-12, 0, 0], [0, 0, np.pi - 1e-9]])
    out = convolve_propagate(lambda x: heat_kernel(0.3, x), 0.05, points=pts, over="kernel")
    assert np.all(np.isfinite(out)) and np.all(out >= 0) and np.all(out < 1e-6)


def test_convolution_preserves_normalization():
    grid = SphericalGrid.build()
    p0 = heat_kernel(0.3, grid.nodes)
    out = convolve_propagate(p0, 0.2, grid)
    assert grid.integrate(out) == pytest.approx(1.0, abs=1e-4)


def test_convolution_rejects_bad_modes():
    with pytest.raises(ValueError):
        convolve_propagate(np.ones(3), 0.1, over="kernel")
    with pytest.raises(ValueError):
        convolve_propagate(lambda x: x, 0.1, over="sideways")


# ---------------------------------------------------------------- Monte Carlo

def _linear_model(A):
    return SdeModel("lin", 3, 1, lambda x: x @ A.T, lambda x: np.zeros(x.shape[:-1] + (3, 1)), np.zeros((1, 1)))


def test_mc_linear_model_matches_closed_form(rng):
    from scipy.linalg import expm
    A = rng.standard_normal((3, 3)) * 0.3
    m0 = Moments(np.array([0.1, -0.2, 0.05]), np.diag([1e-2, 2e-2, 5e-3]))
    res = mc_oracle(_linear_model(A), m0, (0, 1.0), 0.01, 20_000, seed=5)
    E = expm(A)
    assert np.all(np.abs(res.moments.mean - E @ m0.mean) < 4 * res.mean_se)
    # Heun is second order for this drift, so discretization bias is far below 4 SE
    assert np.all(np.abs(res.moments.cov - E @ m0.cov @ E.T) < 4 * res.cov_se + 1e-6)


def test_mc_is_deterministic_per_seed():
    m = model_su2(np.array([0, 0, 0.3]), 0.01 * np.eye(3))
    m0 = Moments(np.zeros(3), 1e-3 * np.eye(3))
    a = mc_oracle(m, m0, (0, 0.5), 0.05, 2000, seed=11)
    b = mc_oracle(m, m0, (0, 0.5), 0.05, 2000, seed=11)
    c = mc_oracle(m, m0, (0, 0.5), 0.05, 2000, seed=12)
    assert np.array_equal(a.moments.mean, b.moments.mean) and np.array_equal(a.moments.cov, b.moments.cov)
    assert not np.array_equal(a.moments.mean, c.moments.mean)


def test_mc_requires_enough_paths():
    with pytest.raises(ValueError):
        mc_oracle(model_su2(np.zeros(3), np.eye(3)), Moments(np.zeros(3), np.eye(3)), (0, 1), 0.1, 10, 0)


def test_mc_reports_escaped_paths():
    m = model_su2(np.zeros(3), 25.0 * np.eye(3))
    m0 = Moments(np.zeros(3), 0.5 * np.eye(3))
    with pytest.raises(PathEscape) as info:
        mc_oracle(m, m0, (0, 1.0), 0.05, 1000, seed=1)
    assert info.value.count > 0
    res = mc_oracle(m, m0, (0, 1.0), 0.05, 1000, seed=1, drop_escaped=True)
    assert res.escaped == info.value.count


def test_mc_histogram_matches_heat_kernel():
    """Radial histogram of the SU(2) diffusion started at the identity vs the kernel at kernel time 0.25."""
    paths = 40_000
    res = mc_oracle(model_su2(np.zeros(3), np.eye(3)), Moments(np.zeros(3), np.zeros((3, 3))), (0, 1.0), 0.005,
                    paths, seed=3, drop_escaped=True, keep_samples=True)
    t = kernel_time(1.0, 1.0)
    r = np.linalg.norm(res.samples, axis=1)
    edges = np.linspace(0, np.pi, 21)
    counts, _ = np.histogram(r, edges)
    emp = counts / paths
    ref = np.array([quad(lambda x: 4 * np.pi * x * x * heat_kernel_radial(t, x), a, b)[0]
                    for a, b in zip(edges[:-1], edges[1:])])
    se = np.sqrt(ref * (1 - ref) / paths)
    assert np.all(np.abs(emp - ref) <= 3 * np.maximum(se, 1 / paths))


# ---------------------------------------------------------------- CLI

def test_heat_kernel_cli_writes_csv(tmp_path):
    out = tmp_path / "k.csv"
    assert main(["--t", "0.1", "1.0", "--points", "5", "--out", str(out), "--plot"]) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["t", "r", "kernel", "gaussian"]
    assert len(rows) == 11
    assert float(rows[1][2]) == pytest.approx(float(heat_kernel_radial(0.1, 0.0)))
    assert out.with_suffix(".png").exists()
