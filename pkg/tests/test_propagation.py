import dataclasses

import numpy as np
import pytest
from scipy.linalg import expm

import oracles as orc
from tsfilter import _jit
from tsfilter.errors import StepReject
from tsfilter.groups import ROTBIAS_DP, ROTBIAS_SE3, S3, SE3, SE23, RotBias
from tsfilter.propagation import (Moments, SdeModel, _gyrobias_se3_ito, beta_tilde, beta_tilde_grad,
                                  ctut_propagate, diffusion_grad_fd, ito_drift, map_propagate, model_gyrobias_dp,
                                  model_gyrobias_se3, model_se3, model_se23, model_su2, se23_drift_matrix, se23_flow,
                                  su2_shorttime_moments, wbar_se3_grad)
from tsfilter.rotation import skew, so3_exp, wbar_so3

I3 = np.eye(3)


def _gyro_model(law, omega, beta_hat, qe=1e-6, qz=1e-9):
    ctor = model_gyrobias_se3 if law == "se3" else model_gyrobias_dp
    return ctor(omega, beta_hat, qe * I3, qz * I3)


# ---------------------------------------------------------------- model examples

def test_su2_model_examples():
    m = model_su2(np.zeros(3), I3)
    assert np.allclose(m.drift(np.zeros(3)), 0)
    assert np.allclose(m.diffusion(np.zeros(3)), 0.5 * I3)
    G = m.diffusion(np.array([np.pi / 2, 0, 0]))
    expected = 0.5 * np.array([[1, 0, 0], [0, 0, -np.pi / 2], [0, np.pi / 2, 0]])
    assert np.allclose(G, expected, atol=1e-14)
    assert np.allclose(G, 0.5 * orc.wbar_oracle(-2 * skew([np.pi / 2, 0, 0])), atol=1e-12)
    m = model_su2(np.array([0, 0, 1.0]), I3)
    assert np.allclose(m.drift(np.array([1.0, 0, 0])), [0, -1, 0])


def test_se3_model_drift_and_diffusion(rng):
    w, v = rng.standard_normal((2, 3))
    m = model_se3(w, v, I3, I3)
    xi = rng.standard_normal(6) * 0.5
    assert np.allclose(m.drift(xi), SE3.adbar(np.concatenate([w, v])) @ xi)
    assert np.allclose(m.diffusion(xi), SE3.wbar(xi))
    assert np.allclose(m.diffusion(np.zeros(6)) @ np.zeros(6), 0)


def test_se23_model_structure(rng):
    w, a = rng.standard_normal((2, 3))
    m = model_se23(w, a, I3, I3)
    A = se23_drift_matrix(w, a)
    assert np.allclose(A[:3, :3], skew(w)) and np.allclose(A[3:6, :3], skew(a))
    assert np.allclose(A[6:, 3:6], I3) and np.allclose(A[6:, :3], 0)
    assert np.allclose(A[:3, 3:], 0) and np.allclose(A[3:6, 6:], 0)
    xi = rng.standard_normal(9) * 0.4
    assert np.allclose(m.drift(xi), A @ xi)
    assert np.allclose(m.diffusion(xi), -SE23.wbar(xi)[:, :6])
    # with no inputs the only coupling is u -> w
    A0 = se23_drift_matrix(np.zeros(3), np.zeros(3))
    assert np.count_nonzero(A0) == 3
    assert "g" not in m.params


def test_se23_drift_is_the_generator_of_the_error_flow(rng):
    """Differentiate log(g(t) mu(t)^-1) along exact flows of the inertial field and compare with A xi."""
    w, a, grav = rng.standard_normal(3) * 0.3, rng.standard_normal(3), np.array([0, 0, -9.81])
    A = se23_drift_matrix(w, a)
    mu = SE23.exp(rng.standard_normal(9) * 0.5)
    h = 1e-4
    for _ in range(5):
        xi = orc.random_tangent(rng, 9, 0.1, 1.5, 0.5)
        g = SE23.exp(xi) @ mu
        err = lambda t: SE23.log(se23_flow(g, w, a, grav, t) @ np.linalg.inv(se23_flow(mu, w, a, grav, t)))
        xi_dot = (err(h) - err(-h)) / (2 * h)
        assert np.abs(xi_dot - A @ xi).max() < 1e-7 * max(1.0, np.abs(A @ xi).max())


def test_gyrobias_drift_vanishes_at_the_mean(rng):
    for _ in range(5):
        w, bh = rng.standard_normal((2, 3))
        for law in ("se3", "dp"):
            m = _gyro_model(law, w, bh)
            assert np.all(m.drift(np.zeros(6)) == 0.0)
    assert np.allclose(beta_tilde(np.zeros(6), bh), bh)


def test_gyrobias_se3_small_error_attitude_equation(rng):
    w = rng.standard_normal(3)
    m = _gyro_model("se3", w, np.zeros(3))
    xi = np.concatenate([rng.standard_normal(3), rng.standard_normal(3)]) * 1e-6
    f = m.drift(xi)
    assert np.allclose(f[:3], skew(w) @ xi[:3] - xi[3:], rtol=0, atol=1e-11)


def test_gyrobias_dp_examples(rng):
    m = _gyro_model("dp", np.zeros(3), np.zeros(3))
    u = rng.standard_normal(3)
    xi = np.concatenate([np.zeros(3), u])
    assert np.allclose(m.drift(xi)[:3], -u)
    eta = rng.standard_normal(6)
    assert np.allclose((m.diffusion(xi) @ eta)[:3], -eta[:3])
    # bias block: u' = zeta regardless of xi
    for _ in range(5):
        x = rng.standard_normal(6)
        assert np.all(m.drift(x)[3:] == 0) and np.array_equal(m.diffusion(x)[3:], np.hstack([np.zeros((3, 3)), I3]))
    d = np.array([0.5, 0.5, 0.0])
    assert np.allclose(wbar_so3(d), orc.wbar_oracle(skew(d)), atol=1e-12)


def _exact_true_flow(law, g, omega, eta, zeta, t):
    """(R, beta) under dR = [omega - beta - eta]x R, dbeta = zeta, to third order in t."""
    rate = omega - g.beta - eta - 0.5 * zeta * t
    return RotBias(so3_exp(t * rate) @ g.R, g.beta + zeta * t, law)


@pytest.mark.parametrize("law", ["se3", "dp"])
def test_gyrobias_drift_matches_independent_derivation(law, rng):
    """Tangent error dynamics re-derived by differentiating log(g mu^-1) along the true and mean flows."""
    G = ROTBIAS_SE3 if law == "se3" else ROTBIAS_DP
    kind = "gyrobias_" + law
    h = 1e-4
    worst = 0.0
    for _ in range(20):
        omega = rng.standard_normal(3)
        mu = G.exp(np.concatenate([rng.standard_normal(3), 0.3 * rng.standard_normal(3)]))
        xi = orc.random_tangent(rng, 6, 0.05, 1.5, 0.3)
        g = G.compose(G.exp(xi), mu)
        noise = rng.standard_normal(6) * 0.5
        m = _gyro_model(law, omega, mu.beta)

        def err(t):
            gt = _exact_true_flow(law, g, omega, noise[:3], noise[3:], t)
            mt = map_propagate(mu, kind, {"omega": omega}, (0.0, t))
            return G.log(G.compose(gt, G.inverse(mt)))

        # fourth-order central difference
        xi_dot = (8 * (err(h) - err(-h)) - (err(2 * h) - err(-2 * h))) / (12 * h)
        model = m.drift(xi) + m.diffusion(xi) @ noise
        worst = max(worst, np.abs(xi_dot - model).max())
    assert worst <= 1e-9


# ---------------------------------------------------------------- gradients and Ito drift

def test_constant_diffusion_has_no_ito_correction(rng):
    A = rng.standard_normal((3, 3))
    Gc = rng.standard_normal((3, 2))
    m = SdeModel("lin", 3, 2, lambda x: x @ A.T, lambda x: np.broadcast_to(Gc, x.shape[:-1] + (3, 2)), np.eye(2))
    x = rng.standard_normal(3)
    assert np.allclose(ito_drift(m, x), A @ x, atol=1e-12)


def test_su2_ito_correction_small_angle_limit():
    q = 0.1
    m = dataclasses.replace(model_su2(np.zeros(3), q * q * I3), diffusion_grad=None)
    xi = np.array([1e-3, 0, 0])
    corr = ito_drift(m, xi) - m.drift(xi)
    expected = -(q * q / 6) * xi
    assert np.abs(corr - expected).max() <= 1e-6 * np.abs(expected).max()


def test_su2_analytic_gradient_matches_fd(rng):
    m = model_su2(rng.standard_normal(3), I3)
    for _ in range(10):
        xi = orc.random_tangent(rng, 3, 0.01, 1.4)
        fd = diffusion_grad_fd(m, xi)
        assert np.abs(m.diffusion_grad(xi) - fd).max() < 1e-8


@pytest.mark.parametrize("law", ["se3", "dp"])
def test_gyrobias_joint_matches_separate_parts(law, rng):
    omega, bh = rng.standard_normal((2, 3))
    m = _gyro_model(law, omega, bh)
    xs = np.stack([orc.random_tangent(rng, 6, 0.0, 2.5, 0.5) for _ in range(8)])
    f, G, dG = m.joint(xs)
    assert np.allclose(f, m.drift(xs), atol=1e-13)
    fd = diffusion_grad_fd(m, xs)
    assert np.abs(dG - fd).max() < 1e-7
    # the gradient array is indexed [j, i, k]
    j = 4
    e = np.zeros(6)
    e[j] = 1e-6
    col = (m.diffusion(xs[0] + e) - m.diffusion(xs[0] - e)) / 2e-6
    assert np.allclose(dG[0, j], col, atol=1e-7)


def test_wbar_se3_gradient_matches_fd(rng):
    for _ in range(10):
        xi = orc.random_tangent(rng, 6, 0.01, 2.5)
        fd = orc.fd_jacobian(SE3.wbar, xi)
        assert np.abs(wbar_se3_grad(xi) - fd).max() < 1e-7


def test_beta_tilde_gradient_matches_fd(rng):
    bh = rng.standard_normal(3)
    for _ in range(10):
        xi = orc.random_tangent(rng, 6, 0.01, 2.5)
        fd = orc.fd_jacobian(lambda x: beta_tilde(x, bh), xi)
        assert np.abs(beta_tilde_grad(xi, bh) - fd.T).max() < 1e-7


def _dense_ito(model, xi):
    f, G, dG = model.joint(xi)
    GQ = G @ model.Q
    return f + 0.5 * np.einsum("...jk,...jik->...i", GQ, dG), G


@pytest.mark.parametrize("law", ["se3", "dp"])
def test_compiled_ito_matches_dense_contraction(law, rng):
    omega, bh = rng.standard_normal((2, 3))
    A = rng.standard_normal((6, 6))
    Q = A @ A.T
    m = dataclasses.replace(_gyro_model(law, omega, bh), Q=Q)
    xs = np.stack([orc.random_tangent(rng, 6, 0.0, 2.8, 0.5) for _ in range(16)])
    ref_f, ref_G = _dense_ito(m, xs)
    kernel = _jit.gyrobias_se3_ito if law == "se3" else _jit.gyrobias_dp_ito
    f, G = _jit.evaluate(kernel, xs, np.broadcast_to(omega, (16, 3)), np.broadcast_to(bh, (16, 3)), Q)
    assert np.abs(G - ref_G).max() < 1e-13
    assert np.abs(f - ref_f).max() < 1e-12 * max(1.0, np.abs(ref_f).max())
    if law == "se3":
        np_f, _ = _gyrobias_se3_ito(xs, np.broadcast_to(omega, (16, 3)), np.broadcast_to(bh, (16, 3)), Q)
        assert np.abs(np_f - ref_f).max() < 1e-12 * max(1.0, np.abs(ref_f).max())


def test_model_ito_hook_uses_constructor_noise(rng):
    omega, bh = rng.standard_normal((2, 3))
    m = model_gyrobias_se3(omega, bh, 2e-3 * I3, 5e-4 * I3)
    xs = rng.standard_normal((4, 6)) * 0.4
    assert np.abs(ito_drift(m, xs) - _dense_ito(m, xs)[0]).max() < 1e-13


# ---------------------------------------------------------------- CTUT

def test_ctut_linear_gaussian_limit(rng):
    A = rng.standard_normal((4, 4)) * 0.5
    m = SdeModel("lin", 4, 1, lambda x: x @ A.T, lambda x: np.zeros(x.shape[:-1] + (4, 1)), np.zeros((1, 1)))
    # the first three coordinates are treated as rotational, so keep them inside the branch
    m0 = rng.standard_normal(4) * 0.1
    B = rng.standard_normal((4, 4))
    P0 = B @ B.T * 0.01
    out = ctut_propagate(Moments(m0, P0), m, (0.0, 1.0), 0.01)
    E = expm(A)
    assert np.abs(out.mean - E @ m0).max() < 1e-8
    assert np.abs(out.cov - E @ P0 @ E.T).max() < 1e-8
    assert np.array_equal(out.cov, out.cov.T)


def test_ctut_noise_free_affine_mean_follows_linear_flow(rng):
    w, a = rng.standard_normal((2, 3)) * 0.3
    m = model_se23(w, a, np.zeros((3, 3)), np.zeros((3, 3)))
    m0 = rng.standard_normal(9) * 0.1
    out = ctut_propagate(Moments(m0, 1e-16 * np.eye(9)), m, (0.0, 1.0), 0.05)
    assert np.abs(out.mean - expm(se23_drift_matrix(w, a)) @ m0).max() < 1e-8


def test_ctut_rejects_sigma_points_past_the_branch():
    m = model_su2(np.zeros(3), 0.01 * I3)
    with pytest.raises(StepReject):
        ctut_propagate(Moments(np.zeros(3), 4.0 * I3), m, (0.0, 0.1), 0.1)


def test_ctut_gyrobias_covariance_is_symmetric_psd(rng):
    m = model_gyrobias_se3(rng.standard_normal(3), 1e-4 * rng.standard_normal(3), 1e-6 * I3, 1e-10 * I3)
    P0 = np.diag([1e-2] * 3 + [1e-8] * 3)
    out = ctut_propagate(Moments(np.zeros(6), P0), m, (0.0, 1.0), 0.1)
    assert np.abs(out.cov - out.cov.T).max() <= 1e-12 * np.abs(out.cov).max()
    assert np.linalg.eigvalsh(out.cov).min() > 0


# ---------------------------------------------------------------- short-time moment ODEs

def test_shorttime_constant_without_noise_or_rotation(rng):
    P0 = np.diag([1e-3, 2e-3, 3e-3])
    m0 = rng.standard_normal(3) * 0.01
    out = su2_shorttime_moments(Moments(m0, P0), np.zeros(3), 0.0, (0.0, 5.0))
    assert np.allclose(out.mean, m0, rtol=0, atol=1e-17) and np.allclose(out.cov, P0, rtol=0, atol=1e-17)


def test_shorttime_isotropic_trace_term_cancels():
    """With contraction = trace_rate = 1/12 and unit source, isotropic P grows exactly as p^2 + q^2 t."""
    p2, q = 1e-3, 0.3
    for t in (0.1, 1.0, 10.0):
        out = su2_shorttime_moments(Moments(np.zeros(3), p2 * I3), np.zeros(3), q, (0.0, t),
                                    contraction=1 / 12, trace_rate=1 / 12, source=1.0)
        assert np.allclose(out.cov, (p2 + q * q * t) * I3, rtol=1e-12, atol=0)


def test_shorttime_isotropic_default_coefficients():
    """Defaults give s' = -(q^2/6) s + q^2/4 for P = s I."""
    p2, q = 1e-3, 0.5
    for t in (0.1, 1.0, 30.0):
        out = su2_shorttime_moments(Moments(np.zeros(3), p2 * I3), np.zeros(3), q, (0.0, t))
        s = 1.5 + (p2 - 1.5) * np.exp(-q * q * t / 6)
        assert np.allclose(out.cov, s * I3, rtol=1e-12, atol=1e-15)


def test_shorttime_mean_rotates_and_decays():
    w = np.array([0, 0, 0.7])
    m0 = np.array([0.01, 0, 0])
    q, t = 0.2, 2.0
    out = su2_shorttime_moments(Moments(m0, 1e-4 * I3), w, q, (0.0, t))
    expected = np.exp(-q * q * t / 6) * so3_exp(-t * w) @ m0
    assert np.allclose(out.mean, expected, atol=1e-15)


# ---------------------------------------------------------------- MAP propagation

def test_map_propagate_zero_rate_keeps_mean(rng):
    q0 = S3.exp(rng.standard_normal(3))
    assert np.allclose(map_propagate(q0, "s3", {"omega": np.zeros(3)}, (0, 3.0)), q0)
    R0 = so3_exp(rng.standard_normal(3))
    assert np.allclose(map_propagate(R0, "so3", {"omega": np.zeros(3)}, (0, 3.0)), R0)
    mu = ROTBIAS_SE3.exp(rng.standard_normal(6))
    out = map_propagate(mu, "gyrobias_se3", {"omega": mu.beta}, (0, 2.0))
    assert np.allclose(out.R, mu.R) and np.allclose(out.beta, mu.beta)


def test_map_propagate_s3_full_turn_is_minus_identity(rng):
    q0 = S3.exp(rng.standard_normal(3) * 0.4)
    out = map_propagate(q0, "s3", {"omega": np.array([0, 0, 2 * np.pi])}, (0.0, 1.0))
    assert np.allclose(out, -q0, atol=1e-14)
    assert S3.membership_residual(out) < 1e-14


def test_map_propagate_se23_without_rotation(rng):
    R0 = so3_exp(rng.standard_normal(3))
    v0, r0, a = rng.standard_normal((3, 3))
    g = np.array([0, 0, -9.81])
    mu = np.eye(5)
    mu[:3, :3], mu[:3, 3], mu[:3, 4] = R0, v0, r0
    t = 2.5
    out = map_propagate(mu, "se23", {"omega": np.zeros(3), "a": a, "g": g}, (0.0, t))
    acc = a + R0 @ g
    assert np.allclose(out[:3, :3], R0)
    assert np.allclose(out[:3, 3], v0 + acc * t, atol=1e-12)
    assert np.allclose(out[:3, 4], r0 + v0 * t + 0.5 * acc * t * t, atol=1e-12)


def test_map_propagate_se23_matches_ode_integration(rng):
    from scipy.integrate import solve_ivp
    w, a, grav = rng.standard_normal(3) * 0.5, rng.standard_normal(3), np.array([0, 0, -9.81])
    mu = SE23.exp(rng.standard_normal(9) * 0.5)

    def rhs(_, y):
        R, v, r = y[:9].reshape(3, 3), y[9:12], y[12:]
        W = skew(w)
        return np.concatenate([(W @ R).ravel(), W @ v + a + R @ grav, W @ r + v])

    y0 = np.concatenate([mu[:3, :3].ravel(), mu[:3, 3], mu[:3, 4]])
    sol = solve_ivp(rhs, (0, 3.0), y0, rtol=1e-12, atol=1e-12)
    out = map_propagate(mu, "se23", {"omega": w, "a": a, "g": grav}, (0, 3.0))
    y = sol.y[:, -1]
    assert np.allclose(out[:3, :3].ravel(), y[:9], atol=1e-9)
    assert np.allclose(out[:3, 3], y[9:12], atol=1e-9) and np.allclose(out[:3, 4], y[12:], atol=1e-9)
    assert SE23.membership_residual(out) < 1e-12


def test_map_propagate_dp_keeps_bias(rng):
    mu = ROTBIAS_DP.exp(rng.standard_normal(6))
    w = rng.standard_normal(3)
    out = map_propagate(mu, "gyrobias_dp", {"omega": w}, (0, 0.7))
    assert np.array_equal(out.beta, mu.beta)
    assert np.allclose(out.R, so3_exp(0.7 * (w - mu.beta)) @ mu.R)


def test_map_propagate_unknown_kind():
    with pytest.raises(ValueError):
        map_propagate(np.eye(3), "sl2", {}, (0, 1))
