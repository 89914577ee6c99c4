"""Orbit geometry, tilted-dipole field and gyro simulation."""
from __future__ import annotations

import numpy as np

from ..groups import S3, quat_to_rot
from .config import DEG, ScenarioConfig

ORBIT_PERIOD_S = 5550.0
ORBIT_RATE = 2.0 * np.pi / ORBIT_PERIOD_S
INCLINATION = 35.0 * DEG
DIPOLE_TILT = 168.6 * DEG
DIPOLE_RATE = 4.178e-3 * DEG
DIPOLE_STRENGTH_UT = 25.54
Q_TRUE_0 = np.array([-0.6744, -0.2126, -0.2126, 0.6744])
BODY_RATE = np.array([0.0, -ORBIT_RATE, 0.0])

CHANNELS = {"init": 0, "gyro": 1, "mag": 2}


def stream(seed: int, run_id: int, channel: str) -> np.random.Generator:
    """Independent generator keyed by (seed, run, channel)."""
    return np.random.default_rng([int(seed), int(run_id), CHANNELS[channel]])


def orbit_unit(t) -> np.ndarray:
    a = ORBIT_RATE * np.asarray(t, dtype=float)
    ci, si = np.cos(INCLINATION), np.sin(INCLINATION)
    return np.stack([ci * np.sin(a), -np.cos(a), si * np.sin(a)], axis=-1)


def true_quaternion(t) -> np.ndarray:
    """q(t) = exp(t M_s(w) / 2) q(0) for the constant body rate."""
    q0 = Q_TRUE_0 / np.linalg.norm(Q_TRUE_0)
    t = np.asarray(t, dtype=float)
    return np.einsum("...ij,j->...i", S3.exp(0.5 * t[..., None] * BODY_RATE), q0)


def orbit_state(t):
    """(r_unit, attitude quaternion, body rate) at time t."""
    return orbit_unit(t), true_quaternion(t), BODY_RATE.copy()


def true_attitude(t) -> np.ndarray:
    """Inertial-to-body rotation matrix."""
    return quat_to_rot(true_quaternion(t))


def dipole_axis(t) -> np.ndarray:
    a = DIPOLE_RATE * np.asarray(t, dtype=float)
    s = np.sin(DIPOLE_TILT)
    return np.stack([s * np.sin(a), s * np.cos(a), np.full_like(a, np.cos(DIPOLE_TILT))], axis=-1)


def dipole_field(t) -> np.ndarray:
    """Inertial magnetic field in microtesla."""
    r = orbit_unit(t)
    m = dipole_axis(t)
    proj = np.sum(m * r, axis=-1, keepdims=True)
    return DIPOLE_STRENGTH_UT * (3.0 * proj * r - m)


def simulate_gyro(omega_true, cfg: ScenarioConfig, rng: np.random.Generator, beta0=None):
    """Trapezoidal discretization of the rate-plus-bias gyro model.

    ``omega_true`` is (K, 3), the true body rate at the start of each step.
    Returns (omega_m (K, 3), beta (K + 1, 3)).
    """
    omega_true = np.asarray(omega_true, dtype=float)
    K = omega_true.shape[0]
    dt = cfg.dt
    beta0 = np.full(3, cfg.true_initial_bias) if beta0 is None else np.asarray(beta0, dtype=float)
    w1 = rng.standard_normal((K, 3))
    w2 = rng.standard_normal((K, 3))
    steps = cfg.sigma_zeta * np.sqrt(dt) * w1
    beta = np.concatenate([beta0[None], beta0 + np.cumsum(steps, axis=0)])
    white = np.sqrt(cfg.sigma_eta ** 2 / dt + cfg.sigma_zeta ** 2 * dt / 12.0)
    omega_m = omega_true + 0.5 * (beta[:-1] + beta[1:]) + white * w2
    return omega_m, beta
