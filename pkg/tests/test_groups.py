import numpy as np
import pytest
from scipy.linalg import expm

import oracles as orc
from tsfilter.errors import TagMismatch
from tsfilter.groups import (ROTBIAS_DP, ROTBIAS_SE3, S3, SE3, SE23, SO3, Quaternion, TimeLawGroup, bch_s,
                             group_by_name, ms_matrix, quat_left_matrix, quat_mul, quat_to_rot, reorthonormalize)
from tsfilter.rotation import so3_exp

LAWS = [ROTBIAS_DP, ROTBIAS_SE3]


def _unit(rng, n=4):
    q = rng.standard_normal(n)
    return q / np.linalg.norm(q)


def _rotbias(rng, G, scale=0.7):
    return G.exp(rng.standard_normal(6) * scale)


# ---------------------------------------------------------------- quaternions

def test_quaternion_product_matches_left_matrix(rng):
    for _ in range(20):
        q, p = Quaternion.from_array(_unit(rng)), Quaternion.from_array(_unit(rng))
        assert np.allclose((q * p).as_array(), quat_left_matrix(q) @ p.as_array(), atol=1e-14)


def test_quaternion_identity_and_unit_norm(rng):
    q = Quaternion.from_array(_unit(rng))
    e = Quaternion.identity()
    assert np.allclose((e * q).as_array(), q.as_array())
    assert np.allclose((q * e).as_array(), q.as_array())
    assert np.isclose(np.linalg.norm((q * q).as_array()), 1.0)


def test_rotation_map_is_homomorphism(rng):
    for _ in range(50):
        q, p = Quaternion.from_array(_unit(rng)), Quaternion.from_array(_unit(rng))
        assert np.abs(quat_to_rot(quat_mul(q, p)) - quat_to_rot(q) @ quat_to_rot(p)).max() < 1e-13


def test_rotation_map_double_cover(rng):
    q = Quaternion.from_array(_unit(rng))
    R = quat_to_rot(q)
    assert np.allclose(quat_to_rot(-q), R, atol=1e-15)
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-14)
    assert np.isclose(np.linalg.det(R), 1.0)


def test_s3_exp_projects_to_so3(rng):
    for _ in range(20):
        a = rng.standard_normal(3) * 0.6
        R = S3.rotation(S3.exp(a))
        # the quaternion algebra bracket is -2x the cross product, hence the factor
        assert np.abs(R - so3_exp(-2 * a)).max() < 1e-13


def test_s3_exp_matches_pade_and_explicit_form(rng):
    for _ in range(20):
        a = rng.standard_normal(3)
        r = np.linalg.norm(a)
        explicit = np.cos(r) * np.eye(4) + np.sin(r) / r * ms_matrix(a)
        assert np.abs(S3.exp(a) - explicit).max() < 1e-13
        assert np.abs(S3.exp(a) - expm(ms_matrix(a))).max() < 1e-13


def test_s3_basis_matches_independent_construction():
    assert np.allclose(S3.basis.mats, orc.quat_basis())


def test_bch_s_composes(rng):
    for _ in range(20):
        a, b = rng.standard_normal((2, 3)) * 0.5
        assert np.abs(S3.exp(bch_s(a, b)) - S3.exp(a) @ S3.exp(b)).max() < 1e-12


def test_reorthonormalize(rng):
    R = so3_exp(rng.standard_normal(3))
    assert reorthonormalize(R) is R or np.array_equal(reorthonormalize(R), R)
    noisy = R + 1e-6 * rng.standard_normal((3, 3))
    fixed = reorthonormalize(noisy)
    assert np.abs(fixed @ fixed.T - np.eye(3)).max() < 1e-14
    assert np.abs(fixed - R).max() < 1e-5


# ---------------------------------------------------------------- SE(k,3)

@pytest.mark.parametrize("group,k", [(SE3, 1), (SE23, 2)], ids=["SE3", "SE23"])
def test_se_basis_matches_independent_construction(group, k):
    assert np.allclose(group.basis.mats, orc.se_basis(k))


@pytest.mark.parametrize("group", [SE3, SE23], ids=lambda g: g.name)
def test_se_inverse_and_compose(group, rng):
    for _ in range(20):
        a, b = (group.exp(v) for v in rng.standard_normal((2, group.n)))
        assert np.allclose(group.compose(a, group.inverse(a)), np.eye(group.d), atol=1e-12)
        assert np.allclose(group.inverse(a), np.linalg.inv(a), atol=1e-12)
        assert np.allclose(group.compose(a, b), a @ b)


def test_se23_exp_matches_pade(rng):
    for _ in range(50):
        xi = orc.random_tangent(rng, 9, 0.0, 2.5, scale=3.0)
        assert np.abs(SE23.exp(xi) - expm(SE23.matrize(xi))).max() < 1e-11


def test_batched_exp_matches_loop(rng):
    xs = rng.standard_normal((7, 9))
    batch = SE23.exp(xs)
    for i in range(7):
        assert np.allclose(batch[i], SE23.exp(xs[i]), atol=1e-15)


def test_group_by_name():
    assert group_by_name("SE23") is SE23
    assert group_by_name("dp") is ROTBIAS_DP
    with pytest.raises(KeyError):
        group_by_name("SL2")


# ---------------------------------------------------------------- SO(3) x R^3 laws

@pytest.mark.parametrize("G", LAWS, ids=lambda g: g.law)
def test_rotbias_group_axioms(G, rng):
    e = G.identity()
    for _ in range(10):
        a, b, c = (_rotbias(rng, G) for _ in range(3))
        lhs = G.compose(G.compose(a, b), c)
        rhs = G.compose(a, G.compose(b, c))
        assert np.allclose(lhs.R, rhs.R) and np.allclose(lhs.beta, rhs.beta)
        ea = G.compose(e, a)
        assert np.allclose(ea.R, a.R) and np.allclose(ea.beta, a.beta)
        ai = G.compose(a, G.inverse(a))
        assert np.allclose(ai.R, np.eye(3), atol=1e-13) and np.allclose(ai.beta, 0, atol=1e-13)


@pytest.mark.parametrize("G", LAWS, ids=lambda g: g.law)
def test_rotbias_matrix_embedding_is_homomorphism(G, rng):
    for _ in range(10):
        a, b = _rotbias(rng, G), _rotbias(rng, G)
        M = G.to_matrix(G.compose(a, b))
        assert np.allclose(M, G.to_matrix(a) @ G.to_matrix(b))
        back = G.from_matrix(G.to_matrix(a))
        assert np.array_equal(back.R, a.R) and np.array_equal(back.beta, a.beta)


@pytest.mark.parametrize("G", LAWS, ids=lambda g: g.law)
def test_rotbias_exp_log_round_trip(G, rng):
    for _ in range(20):
        xi = orc.random_tangent(rng, 6, 0.0, 2.5)
        assert np.allclose(G.log(G.exp(xi)), xi, atol=1e-10)


@pytest.mark.parametrize("G", LAWS, ids=lambda g: g.law)
def test_rotbias_exp_through_embedding(G, rng):
    """exp through the matrix embedding agrees with the closed form."""
    xi = rng.standard_normal(6)
    g = G.exp(xi)
    if G.law == "se3":
        X = SE3.matrize(xi)
        assert np.allclose(G.to_matrix(g), expm(X), atol=1e-12)
    else:
        assert np.allclose(g.R, so3_exp(xi[:3])) and np.array_equal(g.beta, xi[3:])


@pytest.mark.parametrize("G", LAWS, ids=lambda g: g.law)
def test_rotbias_bch_and_jacobians(G, rng):
    for _ in range(10):
        a, b = rng.standard_normal((2, 6)) * 0.5
        c = G.bch(a, b)
        lhs, rhs = G.exp(c), G.compose(G.exp(a), G.exp(b))
        assert np.allclose(lhs.R, rhs.R, atol=1e-12) and np.allclose(lhs.beta, rhs.beta, atol=1e-12)
        xi = rng.standard_normal(6) * 0.8
        assert np.allclose(G.wbar(xi), orc.wbar_oracle(G.adbar(xi)), atol=1e-11)
        assert np.allclose(G.jbar_inv(xi) @ G.jbar(xi), np.eye(6), atol=1e-11)


def test_law_tags_are_checked(rng):
    a = _rotbias(rng, ROTBIAS_DP)
    with pytest.raises(TagMismatch):
        ROTBIAS_SE3.compose(a, a)
    with pytest.raises(ValueError):
        type(ROTBIAS_DP)("bogus")


# ---------------------------------------------------------------- time-parameterized law

def test_time_law_group_axioms(rng):
    G = TimeLawGroup(0.3)
    for _ in range(10):
        a, b, c = (G.element(so3_exp(v[:3]), 0.5 * v[3:]) for v in rng.standard_normal((3, 6)))
        lhs = G.compose(G.compose(a, b), c)
        rhs = G.compose(a, G.compose(b, c))
        assert np.allclose(lhs.R, rhs.R, atol=1e-12) and np.allclose(lhs.beta, rhs.beta, atol=1e-10)
        ai = G.compose(a, G.inverse(a))
        assert np.allclose(ai.beta, 0, atol=1e-12)


def test_time_law_tends_to_semidirect_law(rng):
    a_se, b_se = (_rotbias(rng, ROTBIAS_SE3) for _ in range(2))
    ref = ROTBIAS_SE3.compose(a_se, b_se)
    errs = []
    for t in (1e-2, 1e-3, 1e-4):
        G = TimeLawGroup(t)
        out = G.compose(G.element(a_se.R, a_se.beta), G.element(b_se.R, b_se.beta))
        assert np.allclose(out.R, ref.R)
        errs.append(np.abs(out.beta - ref.beta).max())
    assert errs[2] < 1e-3
    # first-order convergence in t
    assert errs[1] < 0.2 * errs[0] and errs[2] < 0.2 * errs[1]


def test_time_law_rejects_nonpositive_t():
    with pytest.raises(ValueError):
        TimeLawGroup(0.0)
