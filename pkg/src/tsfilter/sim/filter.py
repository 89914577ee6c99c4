"""Batched attitude and gyro-bias filter over Monte-Carlo runs.

All runs of a batch advance together; every per-run quantity is computed
independently of the other members of the batch, so a run gives the same
numbers whether it is processed alone or with others.

Sign convention: the true attitude matrix obeys dA/dt = -[w]x A.  The
filter models dR/dt = [w' - b']x R, so it is fed w' = -omega_m and its
bias state estimates b' = -beta_gyro.  Negation is an automorphism of both
group laws, so this is the same filter written in mirrored coordinates.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..cg import ConcentratedGaussian, chi2_arrays, transport_law, whiten_arrays
from ..errors import TSFError
from ..groups import ROTBIAS_DP, ROTBIAS_SE3, RotBias
from ..measurement import magnetometer_h, ut_update_arrays
from ..propagation import ctut_step, model_gyrobias_dp, model_gyrobias_se3
from ..rotation import so3_exp, so3_log
from .config import ScenarioConfig
from .scenario import BODY_RATE, dipole_field, simulate_gyro, stream, true_attitude

FILTER_NAMES = {"se3": "TSF-SE3", "dp": "TSF-DP"}
LAWS = {"se3": ROTBIAS_SE3, "dp": ROTBIAS_DP}
MODELS = {"se3": model_gyrobias_se3, "dp": model_gyrobias_dp}


@dataclass
class BatchResult:
    """Recorded histories with shape (runs, times[, 3])."""

    filter_name: str
    run_ids: np.ndarray
    t: np.ndarray
    chi2: np.ndarray
    err: np.ndarray
    sig3: np.ndarray
    bias_err: np.ndarray
    bias_sig3: np.ndarray
    aborted: dict = field(default_factory=dict)   # run_id -> (step, message)

    @classmethod
    def empty(cls, name, run_ids, t):
        R, T = len(run_ids), len(t)
        nan = np.full((R, T), np.nan)
        return cls(name, np.asarray(run_ids), t, nan.copy(), np.full((R, T, 3), np.nan),
                   np.full((R, T, 3), np.nan), nan.copy(), nan.copy())

    @classmethod
    def concat(cls, parts):
        parts = list(parts)
        first = parts[0]
        aborted = {}
        for p in parts:
            aborted.update(p.aborted)
        cat = lambda name: np.concatenate([getattr(p, name) for p in parts])
        return cls(first.filter_name, cat("run_ids"), first.t, cat("chi2"), cat("err"), cat("sig3"),
                   cat("bias_err"), cat("bias_sig3"), aborted)


@dataclass
class RunInputs:
    """Truth and sensor data for a set of runs."""

    t: np.ndarray            # (K + 1,)
    A_true: np.ndarray       # (K + 1, 3, 3)
    omega_m: np.ndarray      # (R, K, 3)
    beta: np.ndarray         # (R, K + 1, 3), gyro sign
    mag_noise: np.ndarray    # (R, M, 3)
    xi0: np.ndarray          # (R, 3) initial attitude error draw


def make_inputs(cfg: ScenarioConfig, run_ids) -> RunInputs:
    K = cfg.n_steps
    t = np.arange(K + 1) * cfg.dt
    A_true = true_attitude(t)
    omega_true = np.broadcast_to(BODY_RATE, (K, 3))
    M = K // cfg.mag_every
    om, be, mn, x0 = [], [], [], []
    for rid in run_ids:
        w, b = simulate_gyro(omega_true, cfg, stream(cfg.master_seed, rid, "gyro"))
        om.append(w)
        be.append(b)
        mn.append(cfg.mag_noise_ut * stream(cfg.master_seed, rid, "mag").standard_normal((M, 3)))
        x0.append(cfg.init_att_sigma * stream(cfg.master_seed, rid, "init").standard_normal(3))
    return RunInputs(t, A_true, np.array(om), np.array(be), np.array(mn), np.array(x0))


def initial_covariance(cfg: ScenarioConfig, law: str, mu: RotBias) -> np.ndarray:
    """Initial covariance for one run, moved to the filter's coordinates when needed."""
    P = cfg.initial_cov
    if law == "se3":
        return P
    src = ConcentratedGaussian(ROTBIAS_SE3, ROTBIAS_SE3.element(mu.R, mu.beta), P)
    return transport_law(src, ROTBIAS_DP, cfg.ut_lambda).sigma


def _record(res: BatchResult, j: int, group, mu, P, A_true, beta_true, rows):
    g_true = group.element(np.broadcast_to(A_true, mu.R.shape), -beta_true)
    res.chi2[rows, j] = chi2_arrays(group, mu, P, g_true)
    res.err[rows, j] = so3_log(A_true @ np.swapaxes(mu.R, -1, -2))
    res.sig3[rows, j] = 3.0 * np.sqrt(np.diagonal(P[:, :3, :3], axis1=-2, axis2=-1))
    res.bias_err[rows, j] = np.linalg.norm(-beta_true - mu.beta, axis=-1)
    res.bias_sig3[rows, j] = 3.0 * np.sqrt(np.linalg.eigvalsh(P[:, 3:, 3:])[:, -1])


def run_batch(cfg: ScenarioConfig, law: str, run_ids, inputs: RunInputs | None = None) -> BatchResult:
    """Run the filter for ``run_ids`` in lock-step.  Errors propagate."""
    group = LAWS[law]
    make_model = MODELS[law]
    run_ids = np.atleast_1d(np.asarray(run_ids, dtype=int))
    data = make_inputs(cfg, run_ids) if inputs is None else inputs
    R = len(run_ids)
    K = cfg.n_steps
    dt = cfg.dt
    rec_every = max(1, int(round(cfg.record_every_s / dt)))
    rec_steps = np.arange(0, K + 1, rec_every)
    res = BatchResult.empty(FILTER_NAMES[law], run_ids, data.t[rec_steps])
    rows = np.arange(R)

    R0 = so3_exp(data.xi0) @ data.A_true[0]
    mu = group.element(R0, np.full((R, 3), cfg.init_bias_est))
    P = np.array([initial_covariance(cfg, law, mu[i]) for i in range(R)])
    Rm = cfg.mag_noise_ut ** 2 * np.eye(3)
    lam = cfg.ut_lambda
    zero = np.zeros((R, 6))
    _record(res, 0, group, mu, P, data.A_true[0], data.beta[:, 0], rows)
    j = 1
    for k in range(K):
        w = -data.omega_m[:, k]
        bh = mu.beta
        model = make_model(w, bh, cfg.Q_eta, cfg.Q_zeta)
        mean, P = ctut_step(model, zero, P, dt, lam)
        if law == "se3":
            y = np.concatenate([w - bh, -np.cross(w, bh)], -1)
            mu = group.compose(group.exp(dt * y), mu)
        else:
            mu = group.element(so3_exp(dt * (w - bh)) @ mu.R, bh)
        mu, P, _, _ = whiten_arrays(group, mu, mean, P, cfg.whiten_tol, lam=lam)
        if (k + 1) % cfg.mag_every == 0:
            m = (k + 1) // cfg.mag_every - 1
            B = dipole_field(data.t[k + 1])
            z = (data.A_true[k + 1] @ B) + data.mag_noise[:, m]
            xi, P = ut_update_arrays(group, mu, P, z, lambda g: magnetometer_h(g, B), Rm, lam)
            mu, P, _, _ = whiten_arrays(group, mu, xi, P, cfg.whiten_tol, lam=lam)
        if j < len(rec_steps) and k + 1 == rec_steps[j]:
            _record(res, j, group, mu, P, data.A_true[k + 1], data.beta[:, k + 1], rows)
            j += 1
    return res


def run_single_guarded(cfg: ScenarioConfig, law: str, run_id: int) -> BatchResult:
    """One run; a library error aborts it and is recorded with its time step."""
    try:
        return run_batch(cfg, law, [run_id])
    except TSFError as exc:
        # replay step by step to find where it stopped
        res, step = _run_until_failure(cfg, law, run_id)
        res.aborted[int(run_id)] = (step, f"{type(exc).__name__}: {exc}")
        return res


def _run_until_failure(cfg: ScenarioConfig, law: str, run_id: int):
    lo, hi = 0, cfg.n_steps
    best = None
    from dataclasses import replace
    # bisect the horizon for the longest prefix that completes
    while hi - lo > 1:
        mid = (lo + hi) // 2
        try:
            best = run_batch(replace(cfg, sim_length_s=mid * cfg.dt), law, [run_id])
            lo = mid
        except TSFError:
            hi = mid
    full = BatchResult.empty(FILTER_NAMES[law], [run_id],
                             np.arange(0, cfg.n_steps + 1, max(1, int(round(cfg.record_every_s / cfg.dt)))) * cfg.dt)
    if best is not None:
        n = best.chi2.shape[1]
        for name in ("chi2", "err", "sig3", "bias_err", "bias_sig3"):
            getattr(full, name)[:, :n] = getattr(best, name)
    return full, hi


def run_many(cfg: ScenarioConfig, law: str, run_ids) -> BatchResult:
    """Batched runs; if the batch fails, runs are redone one by one so a single
    failing run is aborted without losing the others."""
    try:
        return run_batch(cfg, law, run_ids)
    except TSFError:
        return BatchResult.concat(run_single_guarded(cfg, law, r) for r in run_ids)


def run_filter(cfg: ScenarioConfig, run_id: int, law: str | None = None) -> list:
    """Per-record view of a single run."""
    from .records import to_records
    return to_records(run_single_guarded(cfg, law or cfg.filter_law, run_id))
