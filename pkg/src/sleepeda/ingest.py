"""Parsing of wrist-sensor channel files and nightly self-report logs.

Channel files follow the two-line-header export convention::

    1500000000          <- start time, UTC seconds
    4                   <- sampling rate, Hz
    0.312               <- one sample per line (EDA, microsiemens)
    ...

ACC files carry three comma-separated columns (g). Header lines of ACC
files may repeat the value once per column, as the device exports them.

On disk a night lives at ``<root>/<participant>/<YYYY-MM-DD>/<CHANNEL>.csv``
and the report log is a CSV with the header ``REPORT_HEADER``.
"""
from __future__ import annotations

import csv
import enum
import io
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateError,
    EmptyTraceError,
    ParseError,
    ValidationError,
)

log = logging.getLogger(__name__)

REPORT_HEADER = ("participant_id", "night_date", "minutes_asleep", "minutes_in_bed", "sq_rating")

# local-time window a trace must touch to belong to a night
NIGHT_START = time(18, 0)
NIGHT_END = time(14, 0)


class Channel(enum.Enum):
    EDA = "EDA"
    ACC_X = "ACC_X"
    ACC_Y = "ACC_Y"
    ACC_Z = "ACC_Z"


ACC_AXES = (Channel.ACC_X, Channel.ACC_Y, Channel.ACC_Z)


@dataclass(frozen=True, eq=False)
class SignalTrace:
    channel_label: Channel
    start_time_s: float
    rate_hz: float
    samples: np.ndarray

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValidationError("samples must be one-dimensional")
        if samples.size == 0:
            raise EmptyTraceError(f"{self.channel_label.value} trace has no samples")
        if not np.all(np.isfinite(samples)):
            raise ValidationError(f"{self.channel_label.value} trace has non-finite samples")
        if not (self.rate_hz > 0 and math.isfinite(self.rate_hz)):
            raise ValidationError(f"sampling rate must be positive, got {self.rate_hz}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.rate_hz

    @property
    def end_time_s(self) -> float:
        return self.start_time_s + self.duration_s


@dataclass(frozen=True)
class NightReport:
    participant_id: str
    night_date: date
    minutes_asleep: float
    minutes_in_bed: float
    sq_rating: int

    def __post_init__(self):
        if self.sq_rating not in (1, 2, 3, 4):
            raise ValidationError(f"sq_rating must be in 1..4, got {self.sq_rating}")
        if not (self.minutes_asleep >= 0 and self.minutes_in_bed >= 0):
            raise ValidationError("minutes must be non-negative")
        if self.minutes_asleep > self.minutes_in_bed:
            raise ValidationError(
                f"minutes_asleep ({self.minutes_asleep}) exceeds minutes_in_bed ({self.minutes_in_bed})"
            )


@dataclass(frozen=True)
class NightSession:
    participant_id: str
    night_date: date
    eda: SignalTrace
    acc: tuple[SignalTrace, SignalTrace, SignalTrace]
    report: NightReport

    def __post_init__(self):
        if self.eda.channel_label is not Channel.EDA:
            raise ValidationError("eda trace must be labeled EDA")
        if tuple(t.channel_label for t in self.acc) != ACC_AXES:
            raise ValidationError("acc traces must be labeled ACC_X, ACC_Y, ACC_Z in order")


def _header_value(line: str, lineno: int, what: str) -> float:
    parts = [p.strip() for p in line.split(",") if p.strip()]
    if not parts:
        raise ParseError(f"missing {what}", line=lineno)
    try:
        values = [float(p) for p in parts]
    except ValueError:
        raise ParseError(f"malformed {what}: {line.strip()!r}", line=lineno) from None
    if any(v != values[0] for v in values) or not math.isfinite(values[0]):
        raise ParseError(f"inconsistent {what}: {line.strip()!r}", line=lineno)
    return values[0]


def _is_acc(label) -> bool:
    if isinstance(label, Channel):
        return label in ACC_AXES
    return str(label).upper() in ("ACC", "ACC_X", "ACC_Y", "ACC_Z")


def parse_channel_file(data: bytes, expected_label) -> tuple[SignalTrace, ...]:
    """Parse one channel export.

    ``expected_label`` is :attr:`Channel.EDA` (or ``"EDA"``) for a
    one-column file, or any ACC label (or ``"ACC"``) for a three-column
    file. Returns a tuple of one EDA trace or three ACC traces.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8 text: {exc}") from None
    lines = text.splitlines()
    if len(lines) < 2:
        raise ParseError("header must have a start-time line and a rate line")
    start = _header_value(lines[0], 1, "start time")
    rate = _header_value(lines[1], 2, "sampling rate")
    if rate <= 0:
        raise ParseError(f"sampling rate must be positive, got {rate}", line=2)

    acc = _is_acc(expected_label)
    ncol = 3 if acc else 1
    rows = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != ncol:
            raise ParseError(f"expected {ncol} column(s), found {len(parts)}", line=lineno)
        try:
            values = [float(p) for p in parts]
        except ValueError:
            raise ParseError(f"non-numeric sample {line.strip()!r}", line=lineno) from None
        if not all(math.isfinite(v) for v in values):
            raise ParseError(f"non-finite sample {line.strip()!r}", line=lineno)
        rows.append(values)
    if not rows:
        raise EmptyTraceError("channel file has a header but no samples")

    arr = np.asarray(rows, dtype=np.float64)
    if not acc:
        return (SignalTrace(Channel.EDA, start, rate, arr[:, 0]),)
    return tuple(SignalTrace(axis, start, rate, arr[:, j]) for j, axis in enumerate(ACC_AXES))


def format_channel_file(traces: Sequence[SignalTrace]) -> bytes:
    """Inverse of :func:`parse_channel_file` (``repr`` keeps floats exact)."""
    traces = tuple(traces)
    if len(traces) not in (1, 3):
        raise ValueError("expected one EDA trace or three ACC traces")
    first = traces[0]
    for t in traces[1:]:
        if t.start_time_s != first.start_time_s or t.rate_hz != first.rate_hz:
            raise ValueError("ACC axes must share start time and rate")
        if t.samples.size != first.samples.size:
            raise ValueError("ACC axes must have equal length")
    ncol = len(traces)
    out = io.StringIO()
    out.write(", ".join([repr(float(first.start_time_s))] * ncol) + "\n")
    out.write(", ".join([repr(float(first.rate_hz))] * ncol) + "\n")
    cols = np.column_stack([t.samples for t in traces])
    for row in cols:
        out.write(",".join(repr(float(v)) for v in row) + "\n")
    return out.getvalue().encode("utf-8")


def parse_report_log(data: bytes) -> list[NightReport]:
    text = data.decode("utf-8")
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty report log") from None
    if tuple(h.strip() for h in header) != REPORT_HEADER:
        raise ParseError(f"report header must be {','.join(REPORT_HEADER)}", line=1)

    reports = []
    seen = set()
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(REPORT_HEADER):
            raise ParseError(f"expected {len(REPORT_HEADER)} fields, found {len(row)}", line=lineno)
        pid, night, asleep, in_bed, sq = (c.strip() for c in row)
        try:
            night_date = date.fromisoformat(night)
        except ValueError:
            raise ParseError(f"bad ISO date {night!r}", line=lineno) from None
        try:
            asleep_f, in_bed_f = float(asleep), float(in_bed)
            sq_i = int(sq)
        except ValueError:
            raise ParseError(f"non-numeric field in {row!r}", line=lineno) from None
        if not in_bed_f > 0:
            raise ValidationError(f"line {lineno}: minutes_in_bed must be positive")
        try:
            report = NightReport(pid, night_date, asleep_f, in_bed_f, sq_i)
        except ValidationError as exc:
            raise ValidationError(f"line {lineno}: {exc}") from None
        key = (pid, night_date)
        if key in seen:
            raise DuplicateError(f"line {lineno}: duplicate report for {pid} on {night_date}")
        seen.add(key)
        reports.append(report)
    return reports


def format_report_log(reports: Iterable[NightReport]) -> bytes:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    for r in reports:
        w.writerow([r.participant_id, r.night_date.isoformat(), repr(float(r.minutes_asleep)),
                    repr(float(r.minutes_in_bed)), r.sq_rating])
    return out.getvalue().encode("utf-8")


def night_window(night_date: date, utc_offset_hours: float = 0.0) -> tuple[float, float]:
    """UTC seconds of [night_date 18:00, next day 14:00) in local time."""
    tz = timezone(timedelta(hours=utc_offset_hours))
    lo = datetime.combine(night_date, NIGHT_START, tzinfo=tz)
    hi = datetime.combine(night_date + timedelta(days=1), NIGHT_END, tzinfo=tz)
    return lo.timestamp(), hi.timestamp()


def trace_in_night(trace: SignalTrace, night_date: date, utc_offset_hours: float = 0.0) -> bool:
    lo, hi = night_window(night_date, utc_offset_hours)
    return trace.start_time_s < hi and trace.end_time_s > lo


@dataclass
class _NightParts:
    eda: list = field(default_factory=list)
    acc: dict = field(default_factory=lambda: defaultdict(list))
    report: NightReport | None = None


def assemble_sessions(
    traces: Mapping[tuple[str, date], Iterable[SignalTrace]],
    reports: Sequence[NightReport],
    utc_offset_hours: float = 0.0,
) -> tuple[list[NightSession], list[str]]:
    """Join traces and reports into complete nights.

    ``traces`` is keyed by ``(participant_id, night_date)`` as carried by
    the directory layout. A night becomes a session only when it has one
    EDA trace, one trace per ACC axis, all overlapping the night window,
    and a report. Every other night yields exactly one warning.
    """
    nights: dict[tuple[str, date], _NightParts] = defaultdict(_NightParts)
    for key, group in traces.items():
        parts = nights[key]
        for t in group:
            if t.channel_label is Channel.EDA:
                parts.eda.append(t)
            else:
                parts.acc[t.channel_label].append(t)
    for r in reports:
        nights[(r.participant_id, r.night_date)].report = r

    sessions, warnings = [], []
    for (pid, night) in sorted(nights):
        parts = nights[(pid, night)]
        problems = []
        if parts.report is None:
            problems.append("no report")
        if len(parts.eda) != 1:
            problems.append("no EDA trace" if not parts.eda else f"{len(parts.eda)} EDA traces")
        for axis in ACC_AXES:
            n = len(parts.acc.get(axis, []))
            if n != 1:
                problems.append(f"no {axis.value} trace" if n == 0 else f"{n} {axis.value} traces")
        members = parts.eda + [t for axis in ACC_AXES for t in parts.acc.get(axis, [])]
        outside = [t.channel_label.value for t in members if not trace_in_night(t, night, utc_offset_hours)]
        if outside:
            problems.append("outside night window: " + ",".join(outside))
        if problems:
            msg = f"{pid} {night.isoformat()}: skipped ({'; '.join(problems)})"
            log.warning(msg)
            warnings.append(msg)
            continue
        acc = tuple(parts.acc[axis][0] for axis in ACC_AXES)
        sessions.append(NightSession(pid, night, parts.eda[0], acc, parts.report))
    return sessions, warnings


def load_session_tree(root, report_log=None, utc_offset_hours: float = 0.0):
    """Read ``<root>/<participant>/<date>/{EDA,ACC}.csv`` plus the report log.

    ``report_log`` defaults to ``<root>/psqi.csv``.
    """
    root = Path(root)
    report_path = Path(report_log) if report_log else root / "psqi.csv"
    reports = parse_report_log(report_path.read_bytes())
    traces: dict[tuple[str, date], list[SignalTrace]] = defaultdict(list)
    for path in sorted(root.glob("*/*/*.csv")):
        stem = path.stem.upper()
        if stem not in ("EDA", "ACC"):
            continue
        pid, night = path.parent.parent.name, path.parent.name
        try:
            night_date = date.fromisoformat(night)
        except ValueError:
            raise ParseError(f"{path}: directory name {night!r} is not an ISO date") from None
        try:
            parsed = parse_channel_file(path.read_bytes(), stem)
        except (ParseError, EmptyTraceError) as exc:
            raise type(exc)(f"{path}: {exc}") from None
        traces[(pid, night_date)].extend(parsed)
    return assemble_sessions(traces, reports, utc_offset_hours)
