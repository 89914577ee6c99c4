"""Scenario parameters and the flat ``key = value`` config format."""
from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

DEG = np.pi / 180.0
DEG_PER_HR = DEG / 3600.0


@dataclass(frozen=True)
class ScenarioConfig:
    """Spacecraft attitude and gyro-bias scenario.  All values in SI units
    except the magnetic field, which is carried in microtesla."""

    sim_length_s: float = 3600.0
    gyro_rate_hz: float = 10.0
    mag_rate_hz: float = 1.0
    sigma_eta: float = 3.1623e-7        # rad / s^(1/2)
    sigma_zeta: float = 3.1623e-10      # rad / s^(3/2)
    true_initial_bias: float = 20.0 * DEG_PER_HR   # rad/s on every axis
    mag_noise_ut: float = 0.05          # 50 nT
    init_att_sigma: float = 10.0 * DEG
    init_bias_sigma: float = 20.0 * DEG_PER_HR
    init_bias_est: float = 0.0
    whiten_tol: float = 1e-15
    ut_lambda: float = 0.0
    mc_runs: int = 50
    master_seed: int = 0
    filter_law: str = "se3"
    record_every_s: float = 1.0

    def __post_init__(self):
        for name in ("sim_length_s", "gyro_rate_hz", "mag_rate_hz", "record_every_s"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("sigma_eta", "sigma_zeta", "init_att_sigma", "init_bias_sigma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.mag_noise_ut <= 0:
            raise ValueError("magnetometer noise must be positive")
        if self.filter_law not in ("se3", "dp"):
            raise ValueError("filter_law must be 'se3' or 'dp'")
        ratio = self.gyro_rate_hz / self.mag_rate_hz
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("gyro rate must be an integer multiple of the magnetometer rate")

    @property
    def dt(self) -> float:
        return 1.0 / self.gyro_rate_hz

    @property
    def n_steps(self) -> int:
        return int(round(self.sim_length_s * self.gyro_rate_hz))

    @property
    def mag_every(self) -> int:
        return int(round(self.gyro_rate_hz / self.mag_rate_hz))

    @property
    def Q_eta(self) -> np.ndarray:
        return self.sigma_eta ** 2 * np.eye(3)

    @property
    def Q_zeta(self) -> np.ndarray:
        return self.sigma_zeta ** 2 * np.eye(3)

    @property
    def initial_cov(self) -> np.ndarray:
        """Initial covariance in the semidirect-law coordinates."""
        return np.diag([self.init_att_sigma ** 2] * 3 + [self.init_bias_sigma ** 2] * 3)

    def full_scale(self) -> "ScenarioConfig":
        return replace(self, sim_length_s=14400.0, mc_runs=200)


def _coerce(kind, text: str):
    if kind is int or kind == "int":
        return int(text)
    if kind is float or kind == "float":
        return float(text)
    return text


def parse_config(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    base = ScenarioConfig() if base is None else base
    types = {f.name: f.type for f in fields(ScenarioConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value'")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in types:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(types[key], val)
    return replace(base, **values)


def load_config(path, base: ScenarioConfig | None = None) -> ScenarioConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), base)


def format_config(cfg: ScenarioConfig) -> str:
    return "".join(f"{f.name} = {getattr(cfg, f.name)!r}\n".replace("'", "") for f in fields(cfg))
