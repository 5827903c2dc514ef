"""Frame-to-frame curvature correlation and the per-stripe behaviour features."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .errors import LengthMismatch, TooFewFrames


def default_max_lag(n_samples: int) -> int:
    return n_samples // 8


def max_cross_correlation(prev, cur, max_lag: int):
    """Largest zero-padded product sum ``sum_i cur[i] * prev[i + j]`` over ``|j| <= max_lag``.

    Returns ``(value, lag)``. Among equal maxima the lag with the smallest
    magnitude wins, then the negative one.
    """
    a = np.asarray(prev, dtype=np.float64)
    b = np.asarray(cur, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"stripe lengths differ: {a.shape} vs {b.shape}")
    if not 0 <= max_lag < len(a):
        raise ValueError(f"max_lag must lie in [0, {len(a)})")
    values, lags = _kernels.xcorr_rows(a[None, :], b[None, :], int(max_lag))
    return float(values[0]), int(lags[0])


def correlate_frames(prev: np.ndarray, cur: np.ndarray, max_lag: int):
    """Row-wise max_cross_correlation of two ``(N, M)`` frames."""
    prev = np.ascontiguousarray(prev, dtype=np.float64)
    cur = np.ascontiguousarray(cur, dtype=np.float64)
    if prev.shape != cur.shape:
        raise LengthMismatch(f"frame shapes differ: {prev.shape} vs {cur.shape}")
    if not 0 <= max_lag < prev.shape[1]:
        raise ValueError(f"max_lag must lie in [0, {prev.shape[1]})")
    return _kernels.xcorr_rows(prev, cur, int(max_lag))


@dataclass(frozen=True)
class CorrelationSeries:
    values: np.ndarray  # (N, T-1)
    lags: np.ndarray

    @property
    def n_stripes(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class FeatureVector:
    sigma: np.ndarray
    recording_id: str = ""
    label: str = "unknown"


def _frame_array(frame) -> np.ndarray:
    if hasattr(frame, "values") and not isinstance(frame, np.ndarray):
        return np.asarray(frame.values, dtype=np.float64)
    if isinstance(frame, (list, tuple)) and frame and hasattr(frame[0], "values"):
        return np.stack([np.asarray(s.values, dtype=np.float64) for s in frame])
    return np.asarray(frame, dtype=np.float64)


class SeriesBuilder:
    """Streaming build_series: feed frames one at a time."""

    def __init__(self, max_lag: Optional[int] = None):
        self.max_lag = max_lag
        self._prev = None
        self._values = []
        self._lags = []

    def push(self, frame) -> None:
        cur = _frame_array(frame)
        if self._prev is not None:
            if cur.shape != self._prev.shape:
                raise LengthMismatch(f"inconsistent frame shape {cur.shape} vs {self._prev.shape}")
            lag = default_max_lag(cur.shape[1]) if self.max_lag is None else self.max_lag
            v, j = correlate_frames(self._prev, cur, lag)
            self._values.append(v)
            self._lags.append(j)
        self._prev = cur

    def result(self) -> CorrelationSeries:
        if not self._values:
            raise TooFewFrames("need at least 2 frames to correlate")
        return CorrelationSeries(np.stack(self._values, axis=1), np.stack(self._lags, axis=1))


def build_series(frames: Sequence, max_lag: Optional[int] = None) -> CorrelationSeries:
    if len(frames) < 2:
        raise TooFewFrames(f"need at least 2 frames, got {len(frames)}")
    builder = SeriesBuilder(max_lag)
    for f in frames:
        builder.push(f)
    return builder.result()


def sigma_features(series: CorrelationSeries, recording_id: str = "",
                   label: str = "unknown") -> FeatureVector:
    """Population standard deviation of each stripe's correlation over time."""
    if series.values.size == 0:
        raise TooFewFrames("empty correlation series")
    return FeatureVector(series.values.std(axis=1), recording_id, label)


def mean_series(series: CorrelationSeries):
    """Per-stripe time mean and per-step stripe mean of the correlation."""
    if series.values.size == 0:
        raise TooFewFrames("empty correlation series")
    return series.values.mean(axis=1), series.values.mean(axis=0)
