"""Multichannel sensor series: downsampling, onset detection, prefix features.

All arrays are laid out channel-major, ``(n_channels, n_samples)``. Standard
deviations use the population (divide-by-N) convention throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from forefront.errors import EmptySeriesError, InvalidArgument, PrefixUnavailable

#: Stds below this floor are treated as zero during z-normalization.
STD_EPS = 1e-12


@dataclass(frozen=True, eq=False)
class RawSeries:
    """One multichannel recording at its acquisition rate."""

    channels: np.ndarray
    sample_rate_hz: float
    label: Optional[int] = None
    location: Optional[int] = None

    def __post_init__(self):
        data = np.asarray(self.channels, dtype=float)
        if data.ndim == 1:
            data = data[None, :]
        if data.ndim != 2 or data.shape[0] < 1:
            raise InvalidArgument("channels must be a (n_channels, n_samples) array")
        if data.shape[1] < 1:
            raise EmptySeriesError("series has no samples")
        if not self.sample_rate_hz > 0:
            raise InvalidArgument(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        object.__setattr__(self, "channels", data)

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    def __len__(self) -> int:
        return self.channels.shape[1]

    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


@dataclass(frozen=True, eq=False)
class Series(RawSeries):
    """A downsampled series; ``effective_rate_hz`` is the rate after averaging."""

    effective_rate_hz: float = field(default=0.0)

    def __post_init__(self):
        super().__post_init__()
        if self.effective_rate_hz <= 0:
            object.__setattr__(self, "effective_rate_hz", float(self.sample_rate_hz))


@dataclass(frozen=True)
class OnsetConfig:
    """Rising-point detector settings, in downsampled samples."""

    window: int = 20
    factor: float = 5.0
    baseline_len: int = 50

    def __post_init__(self):
        if int(self.window) < 2:
            raise InvalidArgument("onset window must be >= 2")
        if self.factor < 0:
            raise InvalidArgument("onset factor must be non-negative")
        if self.baseline_len < self.window:
            raise InvalidArgument("baseline_len must be >= window")


@dataclass(frozen=True, eq=False)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        std = np.asarray(self.std, dtype=float)
        if mean.shape != std.shape or mean.ndim != 1:
            raise InvalidArgument("mean and std must be 1-D arrays of equal length")
        if np.any(std < 0):
            raise InvalidArgument("std must be non-negative")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def apply(self, values: np.ndarray) -> np.ndarray:
        """Z-normalize a vector or a stack of row vectors.

        Dimensions whose training std is below :data:`STD_EPS` map to 0.
        """
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != self.dim:
            raise InvalidArgument(f"feature dim {values.shape[-1]} != stats dim {self.dim}")
        live = self.std > STD_EPS
        safe = np.where(live, self.std, 1.0)
        return np.where(live, (values - self.mean) / safe, 0.0)


def downsample(series: RawSeries, window: int) -> Series:
    """Replace each channel by its non-overlapping window means.

    The trailing partial window is dropped, so the output holds
    ``len(series) // window`` samples at ``sample_rate_hz / window``.
    """
    window = int(window)
    if window < 1:
        raise InvalidArgument(f"downsample window must be >= 1, got {window}")
    n_out = len(series) // window
    if n_out < 1:
        raise EmptySeriesError(f"series of length {len(series)} is shorter than window {window}")
    data = series.channels
    if window > 1:
        data = data[:, : n_out * window].reshape(series.n_channels, n_out, window).mean(axis=2)
    else:
        data = data.copy()
    return Series(
        channels=data,
        sample_rate_hz=series.sample_rate_hz,
        label=series.label,
        location=series.location,
        effective_rate_hz=_rate_of(series) / window,
    )


def _rate_of(series: RawSeries) -> float:
    if isinstance(series, Series):
        return series.effective_rate_hz
    return series.sample_rate_hz


def as_series(series: RawSeries) -> Series:
    if isinstance(series, Series):
        return series
    return downsample(series, 1)


def rolling_std(trace: np.ndarray, window: int) -> np.ndarray:
    """Trailing-window population std; entry ``t`` covers ``trace[t-window+1 : t+1]``.

    The first ``window - 1`` entries are NaN. Each window is shifted by its first
    sample before the std is taken, so constant windows give exactly 0.
    """
    trace = np.asarray(trace, dtype=float)
    out = np.full(trace.shape[0], np.nan)
    if trace.shape[0] < window:
        return out
    views = sliding_window_view(trace, window)
    out[window - 1 :] = (views - views[:, :1]).std(axis=1)
    return out


def detect_onset(series: RawSeries, cfg: OnsetConfig = OnsetConfig()) -> Optional[int]:
    """Index of the rising point of the channel-mean trace, or None.

    The threshold is ``cfg.factor`` times the std of the first
    ``cfg.baseline_len`` samples; the onset is the first index whose trailing
    rolling std strictly exceeds it.
    """
    n = len(series)
    if n < cfg.baseline_len + cfg.window:
        raise InvalidArgument(
            f"series of length {n} too short for onset detection "
            f"(needs {cfg.baseline_len + cfg.window})"
        )
    trace = series.channels.mean(axis=0)
    base = trace[: cfg.baseline_len]
    threshold = cfg.factor * (base - base[0]).std()
    rs = rolling_std(trace, cfg.window)
    hits = np.flatnonzero(rs[cfg.window - 1 :] > threshold)
    if hits.size == 0:
        return None
    return int(hits[0]) + cfg.window - 1


def extract_prefix_features(
    series: RawSeries,
    onset: int,
    k: int,
    stats: Optional[NormStats] = None,
) -> np.ndarray:
    """Baseline-corrected samples ``[onset, onset + k)`` of every channel, flattened.

    Each channel has its pre-onset mean subtracted (nothing is subtracted when
    ``onset == 0``). Output is channel-major with length ``n_channels * k``; if
    ``stats`` is given the vector is z-normalized with it.
    """
    k = int(k)
    onset = int(onset)
    if k < 1:
        raise InvalidArgument(f"prefix length must be >= 1, got {k}")
    if onset < 0:
        raise InvalidArgument(f"onset must be non-negative, got {onset}")
    data = series.channels
    if onset + k > data.shape[1]:
        raise PrefixUnavailable(
            f"prefix [{onset}, {onset + k}) exceeds series length {data.shape[1]}"
        )
    window = data[:, onset : onset + k]
    if onset > 0:
        window = window - data[:, :onset].mean(axis=1, keepdims=True)
    values = np.ascontiguousarray(window).reshape(-1)
    if stats is not None:
        values = stats.apply(values)
    return values


def fit_norm_stats(vectors: Sequence[np.ndarray]) -> NormStats:
    """Per-dimension mean and population std of equal-length vectors."""
    if len(vectors) == 0:
        raise InvalidArgument("cannot fit normalization stats on an empty set")
    try:
        mat = np.vstack([np.asarray(v, dtype=float).reshape(1, -1) for v in vectors])
    except ValueError as exc:
        raise InvalidArgument(f"feature vectors differ in length: {exc}") from None
    return NormStats(mean=mat.mean(axis=0), std=mat.std(axis=0))
