"""Top-K splitting indicator built from ensembles of trajectory records.

Per time node, the K particles with the largest strain eigenvalue
lambda_max are re-selected and their mean forms the indicator series.
The series is integrated over time (running trapezoid) and the slope of
that integral, lightly smoothed, is the detection signal: its interior
argmax is the splitting time t*, and the Top-K particle positions there
are the hotspots. A series that never moves yields a no-split finding
rather than an error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError

DEFAULT_K = 30
DEFAULT_SMOOTHING_WINDOW = 5
NO_SPLIT_TOLERANCE = 1e-12


@dataclass(frozen=True)
class IndicatorSeries:
    times: np.ndarray                # (T,)
    topk_mean_lambda: np.ndarray     # (T,)
    cumulative_integral: np.ndarray  # (T,)
    slope: np.ndarray                # (T,)
    topk_indices: np.ndarray         # (T, K)
    k: int
    smoothing_window: int


@dataclass(frozen=True)
class SplitReport:
    t_star: Optional[float]
    hotspot_positions: Optional[np.ndarray]  # (K, 2) when positions known
    peak_slope: float
    peak_lambda: float
    k: int
    no_split: bool = False
    metadata: dict = field(default_factory=dict)


def _shared_times(records):
    times = records[0].times
    for rec in records[1:]:
        if rec.times.shape != times.shape or not np.array_equal(rec.times, times):
            raise DomainError("records do not share one time grid")
    return times


def lambda_matrix(records) -> np.ndarray:
    """lambda_max per (time, particle), columns in record order."""
    if not records:
        raise DomainError("need at least one record")
    _shared_times(records)
    return np.stack([rec.strain_eigs[:, 0] for rec in records], axis=1)


def delta_field(records) -> np.ndarray:
    """Divergence per (time, particle), copied straight off the records."""
    if not records:
        raise DomainError("need at least one record")
    _shared_times(records)
    return np.stack([rec.divergence for rec in records], axis=1)


def positions_matrix(records) -> np.ndarray:
    """(T, P, 2) positions gathered from the records."""
    if not records:
        raise DomainError("need at least one record")
    _shared_times(records)
    return np.stack([rec.positions for rec in records], axis=1)


def top_k_select(values, k: int) -> np.ndarray:
    """Indices of the k largest values; ties favor the smaller index."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1:
        raise DomainError("values must be one-dimensional")
    if not 1 <= k <= v.shape[0]:
        raise DomainError(f"k must be in [1, {v.shape[0]}], got {k}")
    return np.argsort(-v, kind="stable")[:k]


def moving_average(values, window: int) -> np.ndarray:
    """Centered moving average; windows shrink near the edges."""
    v = np.asarray(values, dtype=float)
    if window == 1:
        return v.copy()
    half = window // 2
    out = np.empty_like(v)
    for i in range(v.shape[0]):
        lo = max(0, i - half)
        hi = min(v.shape[0], i + half + 1)
        out[i] = v[lo:hi].mean()
    return out


def build_indicator(lambdas, times, k: int = DEFAULT_K,
                    smoothing_window: int = DEFAULT_SMOOTHING_WINDOW) -> IndicatorSeries:
    """Assemble the Top-K series, its running integral, and the slope.

    The slope is the centered difference of the cumulative integral
    (one-sided at the endpoints), then smoothed by a centered moving
    average of ``smoothing_window`` nodes. Since the integral's exact
    derivative is the Top-K mean itself, the slope is that mean lightly
    low-passed.
    """
    lam = np.asarray(lambdas, dtype=float)
    t = np.asarray(times, dtype=float)
    if lam.ndim != 2:
        raise DomainError("lambda matrix must be (T, P)")
    n_t, n_p = lam.shape
    if t.shape != (n_t,) or n_t < 2:
        raise DomainError("times must match the lambda matrix and have >= 2 nodes")
    if not 1 <= k <= n_p:
        raise DomainError(f"k must be in [1, {n_p}], got {k}")
    if smoothing_window < 1 or smoothing_window % 2 == 0 \
            or smoothing_window > n_t:
        raise DomainError("smoothing_window must be odd, >= 1, <= grid length")

    order = np.argsort(-lam, axis=1, kind="stable")[:, :k]
    topk_mean = np.take_along_axis(lam, order, axis=1).mean(axis=1)

    cumulative = np.zeros(n_t)
    dt = np.diff(t)
    cumulative[1:] = np.cumsum(0.5 * dt * (topk_mean[1:] + topk_mean[:-1]))

    slope_raw = np.empty(n_t)
    slope_raw[1:-1] = (cumulative[2:] - cumulative[:-2]) / (t[2:] - t[:-2])
    slope_raw[0] = (cumulative[1] - cumulative[0]) / dt[0]
    slope_raw[-1] = (cumulative[-1] - cumulative[-2]) / dt[-1]
    slope = moving_average(slope_raw, smoothing_window)

    return IndicatorSeries(times=t, topk_mean_lambda=topk_mean,
                           cumulative_integral=cumulative, slope=slope,
                           topk_indices=order, k=k,
                           smoothing_window=smoothing_window)


def detect_t_star(series: IndicatorSeries, positions=None,
                  metadata: Optional[dict] = None) -> SplitReport:
    """Locate the splitting time as the interior argmax of the slope.

    Ties resolve to the earliest node. ``positions`` is the (T, P, 2)
    position matrix; when given, the report carries the Top-K particle
    positions at t*. A slope that is constant to within 1e-12 yields a
    no-split finding.
    """
    t = series.times
    if t.shape[0] < 5:
        raise DomainError("need at least 3 interior nodes")
    meta = dict(metadata or {})
    slope = series.slope
    if slope.max() - slope.min() <= NO_SPLIT_TOLERANCE:
        return SplitReport(
            t_star=None, hotspot_positions=None,
            peak_slope=float(slope.max()),
            peak_lambda=float(series.topk_mean_lambda.max()),
            k=series.k, no_split=True, metadata=meta)
    idx = 1 + int(np.argmax(slope[1:-1]))
    hotspots = None
    if positions is not None:
        pos = np.asarray(positions, dtype=float)
        if pos.ndim != 3 or pos.shape[0] != t.shape[0] or pos.shape[2] != 2:
            raise DomainError("positions must be (T, P, 2) over the same grid")
        hotspots = pos[idx][series.topk_indices[idx]]
    return SplitReport(
        t_star=float(t[idx]), hotspot_positions=hotspots,
        peak_slope=float(slope[idx]),
        peak_lambda=float(series.topk_mean_lambda[idx]),
        k=series.k, no_split=False, metadata=meta)
