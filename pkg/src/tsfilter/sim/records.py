"""Per-step run records, CSV files and Monte-Carlo aggregation."""
from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields
from pathlib import Path

import numpy as np

from .filter import BatchResult

STATE_DIM = 6


@dataclass(frozen=True)
class RunRecord:
    filter_name: str
    run_id: int
    t_s: float
    chi2: float
    err_roll_rad: float
    err_pitch_rad: float
    err_yaw_rad: float
    sig3_roll: float
    sig3_pitch: float
    sig3_yaw: float
    bias_err_rads: float
    bias_sig3: float


RUN_COLUMNS = tuple(f.name for f in fields(RunRecord))
AGGREGATE_COLUMNS = ("filter_name", "t_s", "runs", "rms_chi2", "mean_chi2", "chi2_band_lo", "chi2_band_hi",
                     "rms_err_roll", "rms_err_pitch", "rms_err_yaw", "rms_sig3_roll", "rms_sig3_pitch",
                     "rms_sig3_yaw", "rms_bias_err", "rms_bias_sig3")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return "%.17g" % v
    return str(v)


def to_records(res: BatchResult) -> list[RunRecord]:
    out = []
    for i, rid in enumerate(res.run_ids):
        for j, t in enumerate(res.t):
            out.append(RunRecord(res.filter_name, int(rid), float(t), float(res.chi2[i, j]),
                                 *map(float, res.err[i, j]), *map(float, res.sig3[i, j]),
                                 float(res.bias_err[i, j]), float(res.bias_sig3[i, j])))
    return out


def write_runs(path, records) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(RUN_COLUMNS)
        for r in records:
            w.writerow([_fmt(v) for v in astuple(r)])


def read_runs(path) -> list[RunRecord]:
    kinds = [f.type for f in fields(RunRecord)]
    conv = {"str": str, "int": int, "float": float}
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        header = next(rows)
        if tuple(header) != RUN_COLUMNS:
            raise ValueError(f"unexpected runs.csv header: {header}")
        for row in rows:
            out.append(RunRecord(*(conv[k](v) for k, v in zip(kinds, row))))
    return out


@dataclass
class Aggregate:
    """RMS-over-runs curves for one filter; NaN entries (aborted runs) are skipped."""

    filter_name: str
    t: np.ndarray
    runs: np.ndarray
    rms_chi2: np.ndarray
    mean_chi2: np.ndarray
    band: tuple
    rms_err: np.ndarray
    rms_sig3: np.ndarray
    rms_bias_err: np.ndarray
    rms_bias_sig3: np.ndarray
    aborted: dict

    def rows(self):
        for j, t in enumerate(self.t):
            yield (self.filter_name, float(t), int(self.runs[j]), self.rms_chi2[j], self.mean_chi2[j],
                   self.band[0][j], self.band[1][j], *self.rms_err[j], *self.rms_sig3[j],
                   self.rms_bias_err[j], self.rms_bias_sig3[j])

    def window_mean(self, t0: float = -np.inf, t1: float = np.inf, skip_zero: bool = True) -> float:
        """Time average of the RMS chi-squared curve over t0 <= t <= t1."""
        sel = (self.t >= t0) & (self.t <= t1)
        if skip_zero:
            sel &= self.t > 0
        vals = self.rms_chi2[sel]
        if not np.isfinite(vals).any():
            return float("nan")
        return float(np.nanmean(vals))


def chi2_band(runs, n: int = STATE_DIM):
    """Expected normalized chi-squared (1) plus/minus one standard deviation."""
    half = np.sqrt(2.0 / (n * np.maximum(np.asarray(runs, dtype=float), 1.0)))
    return 1.0 - half, 1.0 + half


def _rms(a, axis=0):
    with np.errstate(invalid="ignore"):
        return np.sqrt(np.nanmean(np.square(a), axis=axis))


def aggregate(res: BatchResult) -> Aggregate:
    runs = np.sum(np.isfinite(res.chi2), axis=0)
    with np.errstate(invalid="ignore"):
        mean = np.nanmean(res.chi2, axis=0)
    return Aggregate(res.filter_name, res.t, runs, _rms(res.chi2), mean, chi2_band(runs), _rms(res.err),
                     _rms(res.sig3), _rms(res.bias_err), _rms(res.bias_sig3), dict(res.aborted))


def write_aggregate(path, aggs) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(AGGREGATE_COLUMNS)
        for agg in aggs:
            for row in agg.rows():
                w.writerow([_fmt(v) for v in row])


def batch_from_records(records) -> BatchResult:
    """Rebuild a single-filter batch from records (inverse of :func:`to_records`)."""
    records = list(records)
    if not records:
        raise ValueError("no records")
    names = {r.filter_name for r in records}
    if len(names) != 1:
        raise ValueError("records mix several filters")
    run_ids = sorted({r.run_id for r in records})
    t = np.array(sorted({r.t_s for r in records}))
    res = BatchResult.empty(names.pop(), run_ids, t)
    ri = {rid: i for i, rid in enumerate(run_ids)}
    tj = {tt: j for j, tt in enumerate(t)}
    for r in records:
        i, j = ri[r.run_id], tj[r.t_s]
        res.chi2[i, j] = r.chi2
        res.err[i, j] = (r.err_roll_rad, r.err_pitch_rad, r.err_yaw_rad)
        res.sig3[i, j] = (r.sig3_roll, r.sig3_pitch, r.sig3_yaw)
        res.bias_err[i, j] = r.bias_err_rads
        res.bias_sig3[i, j] = r.bias_sig3
    return res


def output_paths(out_dir) -> dict:
    d = Path(out_dir)
    return {"runs": d / "runs.csv", "aggregate": d / "aggregate.csv"}
