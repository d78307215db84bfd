"""Time-series containers and the evaluation metrics used across experiments.

All series are uniformly sampled. Positions are millimetres, tensions are
newtons, time is seconds. Error metrics treat the first argument as the
reference (commanded/desired) signal and the second as the measurement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateInputError,
    DimensionMismatchError,
    InsufficientDataError,
)

_REL_TOL = 1e-9


@dataclass(frozen=True)
class TimeSeries:
    """Uniformly sampled scalar signal.

    Attributes:
        t0: time of the first sample, s.
        dt: sample spacing, s (> 0).
        values: sample values, float64.
        unit: unit tag, e.g. "mm" or "N". Immutable after construction.
    """

    t0: float
    dt: float
    values: np.ndarray
    unit: str = "mm"

    def __post_init__(self):
        if self.dt <= 0.0:
            raise DimensionMismatchError(f"dt must be positive, got {self.dt}")
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim != 1 or vals.size == 0:
            raise DimensionMismatchError("values must be a non-empty 1-D array")
        object.__setattr__(self, "values", vals)

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def t(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n)

    @property
    def duration(self) -> float:
        return self.dt * (self.n - 1)

    def to_csv(self, path) -> None:
        """Write `t_s,pos_mm` rows (header adapts to the unit tag)."""
        col = "pos_mm" if self.unit == "mm" else f"value_{self.unit}"
        lines = [f"t_s,{col}"]
        t = self.t
        for i in range(self.n):
            lines.append(f"{t[i]:.12g},{self.values[i]:.12g}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")


def _check_pair(a: TimeSeries, b: TimeSeries) -> None:
    if a.n != b.n:
        raise DimensionMismatchError(f"length mismatch: {a.n} vs {b.n}")
    if not math.isclose(a.dt, b.dt, rel_tol=_REL_TOL):
        raise DimensionMismatchError(f"dt mismatch: {a.dt} vs {b.dt}")
    if a.unit != b.unit:
        raise DimensionMismatchError(f"unit mismatch: {a.unit} vs {b.unit}")


def _as_values(a, b) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(a, TimeSeries) and isinstance(b, TimeSeries):
        _check_pair(a, b)
        return a.values, b.values
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise DimensionMismatchError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.ndim != 1 or x.size == 0:
        raise DimensionMismatchError("inputs must be non-empty 1-D")
    return x, y


def rmse(reference, measured) -> float:
    """Root-mean-square error between reference and measurement."""
    x, y = _as_values(reference, measured)
    e = x - y
    return float(np.sqrt(np.mean(e * e)))


def mae_std(reference, measured) -> tuple[float, float]:
    """Mean absolute error and the population std of the absolute errors.

    Returns:
        (mae, std) where std uses the population convention (ddof = 0).
    """
    x, y = _as_values(reference, measured)
    e = np.abs(x - y)
    return float(np.mean(e)), float(np.std(e))


def residual_std(reference, measured) -> float:
    """Population std of the signed residuals (reference - measured)."""
    x, y = _as_values(reference, measured)
    return float(np.std(x - y))


def pearson(reference, measured) -> float:
    """Pearson correlation coefficient.

    Raises:
        DegenerateInputError: if either input has zero variance. The
            coefficient is undefined there; this never returns NaN.
    """
    x, y = _as_values(reference, measured)
    xc = x - np.mean(x)
    yc = y - np.mean(y)
    sx = float(np.dot(xc, xc))
    sy = float(np.dot(yc, yc))
    if sx == 0.0 or sy == 0.0:
        raise DegenerateInputError("pearson undefined for zero-variance input")
    return float(np.dot(xc, yc) / math.sqrt(sx * sy))


def normalize_correlations(values) -> np.ndarray:
    """Min-max normalize a batch of correlation values onto [0, 1].

    The smallest input maps to exactly 0.0 and the largest to exactly 1.0.
    Ties with the extremes all map to the same endpoint.

    Raises:
        DegenerateInputError: if all inputs are equal (zero range).
        InsufficientDataError: if fewer than two values are given.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 2:
        raise InsufficientDataError("need at least two correlation values")
    lo = float(np.min(v))
    hi = float(np.max(v))
    if hi == lo:
        raise DegenerateInputError("all correlations equal; range is zero")
    return (v - lo) / (hi - lo)


def phase_gain(reference: TimeSeries, measured: TimeSeries, period: float) -> tuple[float, float]:
    """Fundamental-frequency gain and phase lag via single-bin Fourier projection.

    Both series are truncated to the largest whole number of periods before
    projecting onto exp(-2*pi*i*t/period). The lag is returned in seconds,
    mapped into [0, period).

    Returns:
        (gain, lag_s): amplitude ratio measured/reference and the time by
        which the measurement trails the reference.

    Raises:
        InsufficientDataError: if the series span fewer than two periods.
        DegenerateInputError: if the reference has no power at 1/period.
    """
    _check_pair(reference, measured)
    if period <= 0.0:
        raise InsufficientDataError(f"period must be positive, got {period}")
    span = reference.dt * reference.n
    n_per = math.floor(span / period + _REL_TOL)
    if n_per < 2:
        raise InsufficientDataError(
            f"series span {span:.6g} s covers {n_per} periods; need at least 2"
        )
    k = int(round(n_per * period / reference.dt))
    k = min(k, reference.n)
    t = reference.dt * np.arange(k)
    basis = np.exp(-2j * np.pi * t / period)
    c_ref = np.dot(reference.values[:k], basis) * (2.0 / k)
    c_meas = np.dot(measured.values[:k], basis) * (2.0 / k)
    a_ref = abs(c_ref)
    if a_ref < 1e-15:
        raise DegenerateInputError("reference has no power at the projection frequency")
    gain = float(abs(c_meas) / a_ref)
    # positive lag = measurement trails the reference
    lag = float(np.angle(c_ref) - np.angle(c_meas)) / (2.0 * np.pi) * period
    lag %= period
    return gain, lag


def hysteresis_loop_area(x_in, x_out) -> float:
    """Signed area enclosed by the (x_in, x_out) curve, positive for lag.

    Computed as the trapezoid form of -closed-contour integral of x_out dx_in,
    closing the contour from the last point back to the first. For a
    physically lagging (dissipative) transmission the traversal encloses
    positive area per cycle; for multi-cycle inputs areas accumulate.
    """
    x, y = _as_values(x_in, x_out)
    dx = np.diff(x)
    area = -float(np.dot((y[:-1] + y[1:]) * 0.5, dx))
    # closing segment back to the start
    area -= float((y[-1] + y[0]) * 0.5 * (x[0] - x[-1]))
    return area


def band_spread(x, y, n_bins: int = 20) -> float:
    """Mean vertical spread of a looping (x, y) curve.

    Bins the middle 80 % of the x range into n_bins and averages the
    (max - min) of y in the occupied bins. Used to compare how wide the
    tension-transfer loop is between operating conditions.
    """
    xv, yv = _as_values(x, y)
    lo, hi = np.quantile(xv, [0.1, 0.9])
    if hi <= lo:
        raise DegenerateInputError("x range collapses; spread undefined")
    mask = (xv >= lo) & (xv <= hi)
    xb = xv[mask]
    yb = yv[mask]
    idx = np.clip(((xb - lo) / (hi - lo) * n_bins).astype(int), 0, n_bins - 1)
    spreads = []
    for b in range(n_bins):
        sel = yb[idx == b]
        if sel.size >= 2:
            spreads.append(float(np.max(sel) - np.min(sel)))
    if not spreads:
        raise InsufficientDataError("no bin holds two or more samples")
    return float(np.mean(spreads))


@dataclass(frozen=True)
class MetricReport:
    """Bundle of tracking metrics for one episode.

    `std_mm` is the population std of the absolute errors unless stated
    otherwise by the producing experiment (the frequency sweep reports the
    std of signed residuals; its report says so).
    """

    rmse_mm: float
    mae_mm: float
    std_mm: float
    pearson: float
    norm_corr: float | None = None

    def __post_init__(self):
        if self.rmse_mm < 0.0 or self.mae_mm < 0.0 or self.std_mm < 0.0:
            raise DegenerateInputError("error metrics must be nonnegative")
        if not -1.0 - 1e-12 <= self.pearson <= 1.0 + 1e-12:
            raise DegenerateInputError(f"pearson out of range: {self.pearson}")

    def to_json(self) -> dict:
        return {
            "rmse_mm": self.rmse_mm,
            "mae_mm": self.mae_mm,
            "std_mm": self.std_mm,
            "pearson": self.pearson,
            "norm_corr": self.norm_corr,
        }


def metric_report(reference, measured, norm_corr: float | None = None) -> MetricReport:
    """Convenience constructor computing all shared metrics for one pair."""
    mae, std = mae_std(reference, measured)
    return MetricReport(
        rmse_mm=rmse(reference, measured),
        mae_mm=mae,
        std_mm=std,
        pearson=pearson(reference, measured),
        norm_corr=norm_corr,
    )
