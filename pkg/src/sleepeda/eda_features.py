"""Night-level EDA features: peaks, peak epochs and storms.

A peak (skin conductance response) is a local maximum of the smoothed
signal that rises at least ``min_amplitude_us`` above the preceding local
minimum with a mean slope of at least ``min_rise_rate_us_per_s``. Time is
cut into fixed epochs; an epoch with one or more peaks is a peak epoch,
and a storm is a maximal run of at least ``storm_min_epochs`` consecutive
peak epochs. Storm sizes are measured in epochs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from . import kernels
from .errors import ChannelError, ConfigError, RangeError
from .ingest import Channel, NightSession, SignalTrace

FEATURE_NAMES = (
    "peak_epoch_count",
    "storm_count",
    "storm_mean",
    "storm_sd",
    "storm_max",
    "peak_count",
)


@dataclass(frozen=True)
class FeatureConfig:
    smoothing_window_s: float = 2.0
    min_amplitude_us: float = 0.05
    min_rise_rate_us_per_s: float = 0.01
    epoch_len_s: float = 30.0
    storm_min_epochs: int = 2

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and v > 0 and math.isfinite(v)):
                raise ConfigError(f"FeatureConfig.{f.name} must be strictly positive, got {v!r}")
        if int(self.storm_min_epochs) != self.storm_min_epochs:
            raise ConfigError("storm_min_epochs must be an integer")


@dataclass(frozen=True)
class PeakEvent:
    sample_index: int
    time_offset_s: float
    amplitude_us: float
    rise_rate_us_per_s: float


@dataclass(frozen=True)
class EpochFlags:
    epoch_len_s: float
    flags: np.ndarray

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.flags))


@dataclass(frozen=True)
class Storm:
    start_epoch: int
    length_epochs: int


@dataclass(frozen=True)
class EdaFeatureVector:
    peak_epoch_count: int
    storm_count: int
    storm_mean: float
    storm_sd: float
    storm_max: float
    peak_count: int

    def as_tuple(self):
        return tuple(getattr(self, name) for name in FEATURE_NAMES)


def smooth(samples, rate_hz, window_s):
    """Centered moving average; edges use the samples that exist."""
    x = np.asarray(samples, dtype=np.float64)
    w = max(1, int(round(window_s * rate_hz)))
    if w % 2 == 0:
        w += 1
    if w == 1 or x.size < 2:
        return x.copy()
    half = w // 2
    csum = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(x.size)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, x.size)
    return (csum[hi] - csum[lo]) / (hi - lo)


def detect_peaks(trace: SignalTrace, config: FeatureConfig = FeatureConfig()) -> list[PeakEvent]:
    if trace.channel_label is not Channel.EDA:
        raise ChannelError(f"peak detection needs an EDA trace, got {trace.channel_label.value}")
    if trace.rate_hz < 1:
        raise ConfigError(f"EDA rate must be at least 1 Hz, got {trace.rate_hz}")
    # remove the offset before smoothing so that a constant shift of the
    # trace cannot change cumulative-sum rounding
    x = trace.samples - trace.samples[0]
    s = smooth(x, trace.rate_hz, config.smoothing_window_s)
    idx, amps, rates = kernels.scan_peaks(
        s, trace.rate_hz, config.min_amplitude_us, config.min_rise_rate_us_per_s
    )
    return [
        PeakEvent(int(i), i / trace.rate_hz, float(a), float(r))
        for i, a, r in zip(idx, amps, rates)
    ]


def epoch_peaks(peaks, duration_s: float, config: FeatureConfig = FeatureConfig()) -> EpochFlags:
    n_epochs = max(1, math.ceil(duration_s / config.epoch_len_s))
    flags = np.zeros(n_epochs, dtype=bool)
    for p in peaks:
        if not 0 <= p.time_offset_s < duration_s:
            raise RangeError(f"peak at {p.time_offset_s} s lies outside [0, {duration_s})")
        flags[min(int(p.time_offset_s // config.epoch_len_s), n_epochs - 1)] = True
    return EpochFlags(config.epoch_len_s, flags)


def detect_storms(flags: EpochFlags, config: FeatureConfig = FeatureConfig()) -> list[Storm]:
    starts, lengths = kernels.run_lengths(flags.flags)
    keep = lengths >= config.storm_min_epochs
    return [Storm(int(s), int(n)) for s, n in zip(starts[keep], lengths[keep])]


def summarize(peak_count: int, flags: EpochFlags, storms) -> EdaFeatureVector:
    sizes = np.array([s.length_epochs for s in storms], dtype=np.float64)
    if sizes.size == 0:
        mean = sd = mx = 0.0
    else:
        mean = float(sizes.mean())
        sd = float(sizes.std(ddof=1)) if sizes.size > 1 else 0.0
        mx = float(sizes.max())
    return EdaFeatureVector(
        peak_epoch_count=flags.count,
        storm_count=len(storms),
        storm_mean=mean,
        storm_sd=sd,
        storm_max=mx,
        peak_count=int(peak_count),
    )


def trace_features(trace: SignalTrace, config: FeatureConfig = FeatureConfig()) -> EdaFeatureVector:
    peaks = detect_peaks(trace, config)
    flags = epoch_peaks(peaks, trace.duration_s, config)
    return summarize(len(peaks), flags, detect_storms(flags, config))


def extract_night_features(session: NightSession, config: FeatureConfig = FeatureConfig()) -> EdaFeatureVector:
    return trace_features(session.eda, config)
