"""Accelerometer sleep/wake scoring and self-report sleep targets."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import AlignmentError, ConfigError, DomainError, ValidationError
from .ingest import ACC_AXES, NightReport


class SleepState(enum.IntEnum):
    WAKE = 0
    SLEEP = 1


class SqClass(enum.IntEnum):
    POOR = 0
    GOOD = 1


@dataclass(frozen=True)
class ActivityCounts:
    epoch_len_s: float
    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.float64)
        if c.ndim != 1 or c.size < 1:
            raise ValidationError("activity counts need at least one epoch")
        if not np.all(np.isfinite(c)) or np.any(c < 0):
            raise ValidationError("activity counts must be finite and non-negative")
        object.__setattr__(self, "counts", c)


@dataclass(frozen=True)
class SleepWakeSeries:
    epoch_len_s: float
    states: tuple

    def __len__(self):
        return len(self.states)


@dataclass(frozen=True)
class ColeWeights:
    """Weights for lags -4..+2 around the scored epoch."""

    scale: float = 1e-5
    w: tuple = (404.0, 598.0, 326.0, 441.0, 1408.0, 508.0, 350.0)

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigError("Cole scale must be positive")
        if len(self.w) != 7:
            raise ConfigError("Cole weights need 7 values (lags -4..+2)")


def activity_counts(acc, epoch_len_s: float, count_gain: float = 100.0) -> ActivityCounts:
    """Per-epoch maximum deviation of the acceleration magnitude from 1 g."""
    if not epoch_len_s > 0:
        raise ConfigError(f"epoch length must be positive, got {epoch_len_s}")
    acc = tuple(acc)
    if len(acc) != 3:
        raise AlignmentError("need exactly three ACC axes")
    if tuple(t.channel_label for t in acc) != ACC_AXES:
        raise AlignmentError("ACC traces must be X, Y, Z in order")
    n = acc[0].samples.size
    rate = acc[0].rate_hz
    if any(t.samples.size != n for t in acc) or any(t.rate_hz != rate for t in acc):
        raise AlignmentError("ACC axes differ in length or rate")
    x, y, z = (t.samples for t in acc)
    dev = np.abs(np.sqrt(x * x + y * y + z * z) - 1.0)
    per = max(1, int(round(epoch_len_s * rate)))
    starts = np.arange(0, n, per)
    counts = np.maximum.reduceat(dev, starts) * count_gain
    return ActivityCounts(epoch_len_s, counts)


def cole_sleep_wake(counts: ActivityCounts, weights: ColeWeights = ColeWeights()) -> SleepWakeSeries:
    d = cole_index(counts, weights)
    states = tuple(SleepState.SLEEP if v < 1.0 else SleepState.WAKE for v in d)
    return SleepWakeSeries(counts.epoch_len_s, states)


def cole_index(counts: ActivityCounts, weights: ColeWeights = ColeWeights()) -> np.ndarray:
    """The weighted activity sum D per epoch (zero padding at both ends)."""
    return kernels.cole_scores(counts.counts, np.asarray(weights.w, dtype=np.float64), weights.scale)


def sleep_efficiency(report: NightReport) -> float:
    if not report.minutes_in_bed > 0:
        raise DomainError("sleep efficiency undefined when minutes_in_bed is 0")
    return report.minutes_asleep / report.minutes_in_bed


def sensor_sleep_efficiency(series: SleepWakeSeries) -> float:
    if len(series.states) == 0:
        raise DomainError("empty sleep/wake series")
    return sum(1 for s in series.states if s is SleepState.SLEEP) / len(series.states)


def sq_binarize(rating: int) -> SqClass:
    if isinstance(rating, bool) or rating not in (1, 2, 3, 4):
        raise ValidationError(f"SQ rating must be 1..4, got {rating!r}")
    return SqClass.GOOD if rating >= 3 else SqClass.POOR


def night_targets(session, epoch_len_s: float = 30.0, weights: ColeWeights = ColeWeights(),
                  count_gain: float = 100.0) -> dict:
    """Self-report and sensor targets for one session (target CSV row)."""
    counts = activity_counts(session.acc, epoch_len_s, count_gain)
    se_sensor = sensor_sleep_efficiency(cole_sleep_wake(counts, weights))
    return {
        "participant_id": session.participant_id,
        "night_date": session.night_date.isoformat(),
        "se_selfreport": sleep_efficiency(session.report),
        "se_sensor": se_sensor,
        "sq_binary": int(sq_binarize(session.report.sq_rating)),
    }


TARGET_COLUMNS = ("participant_id", "night_date", "se_selfreport", "se_sensor", "sq_binary")
