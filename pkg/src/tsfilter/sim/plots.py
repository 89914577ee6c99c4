"""Report figures for Monte-Carlo aggregates."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .records import Aggregate  # noqa: E402

RAD2DEG = 180.0 / np.pi
RADS2DEGHR = RAD2DEG * 3600.0


def plot_chi2(aggs: list[Aggregate], path) -> Path:
    fig, ax = plt.subplots(figsize=(8, 4))
    for agg in aggs:
        ax.plot(agg.t / 60.0, agg.rms_chi2, label=agg.filter_name, lw=1)
    lo, hi = aggs[0].band
    t = aggs[0].t / 60.0
    ax.fill_between(t, lo, hi, color="0.8", label="expected value ±1σ")
    ax.axhline(1.0, color="k", lw=0.6)
    ax.set_yscale("log")
    ax.set_xlabel("time [min]")
    ax.set_ylabel("RMS normalized χ²")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_attitude(aggs: list[Aggregate], path) -> Path:
    fig, axes = plt.subplots(3, 1, figsize=(8, 7), sharex=True)
    for k, name in enumerate(("roll", "pitch", "yaw")):
        ax = axes[k]
        for agg in aggs:
            line, = ax.plot(agg.t / 60.0, agg.rms_err[:, k] * RAD2DEG, lw=1, label=f"{agg.filter_name} error")
            ax.plot(agg.t / 60.0, agg.rms_sig3[:, k] * RAD2DEG, lw=1, ls="--", color=line.get_color(),
                    label=f"{agg.filter_name} 3σ")
        ax.set_yscale("log")
        ax.set_ylabel(f"{name} [deg]")
    axes[0].legend(fontsize=8)
    axes[-1].set_xlabel("time [min]")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_bias(aggs: list[Aggregate], path) -> Path:
    fig, ax = plt.subplots(figsize=(8, 4))
    for agg in aggs:
        line, = ax.plot(agg.t / 60.0, agg.rms_bias_err * RADS2DEGHR, lw=1, label=f"{agg.filter_name} error")
        ax.plot(agg.t / 60.0, agg.rms_bias_sig3 * RADS2DEGHR, lw=1, ls="--", color=line.get_color(),
                label=f"{agg.filter_name} 3σ bound")
    ax.set_yscale("log")
    ax.set_xlabel("time [min]")
    ax.set_ylabel("gyro bias [deg/hr]")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def render_report(aggs: list[Aggregate], out_dir) -> list[Path]:
    out = Path(out_dir)
    return [plot_chi2(aggs, out / "chi2.png"), plot_attitude(aggs, out / "attitude.png"),
            plot_bias(aggs, out / "bias.png")]
