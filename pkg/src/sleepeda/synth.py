"""Synthetic ground truth for every pipeline stage.

``generate_tabular`` draws nights from a two-factor latent model
(EDA Magnitude, EDA Storms) with a Magnitude -> SE -> SQ path, and
``generate_eda_trace`` renders raw EDA traces with planted responses.

The default factor pattern is expressed in the promax frame: the oblique
pattern that an ML + promax analysis of the model's own population
correlation matrix returns (to 1e-3). Only that frame is identifiable
from data, so it is the frame in which recovery can be checked.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from datetime import date, datetime, time, timedelta, timezone
from pathlib import Path

import numpy as np
from scipy import optimize, special, stats

from .dataset import Kind, MixedDataset
from .eda_features import FEATURE_NAMES
from .errors import ConfigError, ScriptError
from .ingest import Channel, NightReport, SignalTrace, format_channel_file, format_report_log

MAGNITUDE_FEATURES = ("peak_epoch_count", "storm_mean", "storm_sd", "storm_max", "peak_count")
STORM_FEATURE = "storm_count"
SE, SQ = "SE", "SQ"


class Link(enum.Enum):
    PROBIT = "probit"
    LOGIT = "logit"


@dataclass(frozen=True)
class GroundTruthModel:
    """Latent model behind the synthetic nights.

    ``magnitude_loadings`` follow ``MAGNITUDE_FEATURES``;
    ``storms_secondary`` are the Storms-factor loadings of those same
    five features. ``path_se_sq`` is the correlation between SE and the
    0/1 SQ outcome, i.e. the standardized path a linear model of the
    binary endpoint estimates; the link slope is calibrated to hit it.
    """

    magnitude_loadings: tuple = (0.868, 0.978, 0.947, 0.998, 0.868)
    storms_loading: float = 0.83
    cross_loading: float = -0.09
    storms_secondary: tuple = (0.329, -0.163, -0.158, -0.166, 0.329)
    factor_correlation: float = 0.19
    path_mag_se: float = 0.31
    path_se_sq: float = 0.61
    sq_link: Link = Link.PROBIT

    def __post_init__(self):
        if len(self.magnitude_loadings) != 5 or len(self.storms_secondary) != 5:
            raise ConfigError("need five Magnitude loadings and five secondary Storms loadings")
        if not (abs(self.path_mag_se) < 1 and abs(self.path_se_sq) < 1 and abs(self.factor_correlation) < 1):
            raise ConfigError("standardized paths and factor correlation must lie in (-1, 1)")
        if abs(self.path_se_sq) >= MAX_BINARY_CORRELATION:
            raise ConfigError(
                f"|path_se_sq| must be below {MAX_BINARY_CORRELATION:.4f} for a binary outcome at a median split"
            )
        psi = self.uniquenesses()
        if np.any(psi <= 0):
            raise ConfigError("loadings imply non-positive uniquenesses")
        if np.linalg.eigvalsh(self.implied_covariance())[0] <= 0:
            raise ConfigError("implied covariance is not positive definite")

    @property
    def sq_link_enum(self):
        return Link(self.sq_link)

    def pattern(self):
        """6 x 2 loading matrix in ``FEATURE_NAMES`` order."""
        P = np.zeros((6, 2))
        for name, lam, sec in zip(MAGNITUDE_FEATURES, self.magnitude_loadings, self.storms_secondary):
            P[FEATURE_NAMES.index(name)] = (lam, sec)
        P[FEATURE_NAMES.index(STORM_FEATURE)] = (self.cross_loading, self.storms_loading)
        return P

    def phi(self):
        r = self.factor_correlation
        return np.array([[1.0, r], [r, 1.0]])

    def uniquenesses(self):
        P = self.pattern()
        return 1.0 - np.einsum("ij,jk,ik->i", P, self.phi(), P)

    def implied_covariance(self):
        """Population covariance of the eight observed columns
        (six features, SE, SQ coded 0/1)."""
        P, Phi = self.pattern(), self.phi()
        S = np.zeros((8, 8))
        S[:6, :6] = P @ Phi @ P.T + np.diag(self.uniquenesses())
        cov_x_mag = (P @ Phi)[:, 0]
        a = self.path_mag_se
        S[:6, 6] = S[6, :6] = a * cov_x_mag
        S[6, 6] = 1.0
        cov_se_sq = self.path_se_sq * 0.5
        S[6, 7] = S[7, 6] = cov_se_sq
        S[:6, 7] = S[7, :6] = a * cov_x_mag * cov_se_sq
        S[7, 7] = 0.25
        return S

    def implied_correlation(self):
        S = self.implied_covariance()
        d = 1.0 / np.sqrt(np.diag(S))
        return S * np.outer(d, d)


# corr(Z, 1[Z + noise > 0]) can not exceed this for a median split
MAX_BINARY_CORRELATION = float(2 * stats.norm.pdf(0.0))


def _logit_corr(beta):
    x, w = np.polynomial.hermite_e.hermegauss(80)
    w = w / w.sum()
    p = special.expit(beta * x)
    return float(np.sum(w * x * p) / 0.5)


def link_slope(path_se_sq, link=Link.PROBIT):
    """Slope on standardized SE giving corr(SE, SQ) = ``path_se_sq``."""
    link = Link(link)
    if path_se_sq == 0:
        return 0.0
    if link is Link.PROBIT:
        g = path_se_sq * 0.5 / stats.norm.pdf(0.0)
        return g / math.sqrt(1.0 - g * g)
    sign = math.copysign(1.0, path_se_sq)
    target = abs(path_se_sq)
    beta = optimize.brentq(lambda b: _logit_corr(b) - target, 0.0, 200.0, xtol=1e-12)
    return sign * beta


@dataclass(frozen=True)
class LatentTruth:
    magnitude: np.ndarray
    storms: np.ndarray
    se: np.ndarray
    sq_probability: np.ndarray
    pattern: np.ndarray
    factor_correlations: np.ndarray

    def to_dict(self):
        return {
            "pattern": self.pattern.tolist(),
            "factor_correlations": self.factor_correlations.tolist(),
            "magnitude": self.magnitude.tolist(),
            "storms": self.storms.tolist(),
        }


def generate_tabular(model: GroundTruthModel = GroundTruthModel(), n: int = 77, seed: int = 0):
    """Draw ``n`` i.i.d. nights.

    Returns the observed table (six features and SE continuous, SQ
    discrete 0/1) and the hidden latent values.
    """
    if n < 10:
        raise ConfigError("generate_tabular needs n >= 10")
    rng = np.random.default_rng(seed)
    P, Phi = model.pattern(), model.phi()
    latent = rng.standard_normal((n, 2)) @ np.linalg.cholesky(Phi).T
    noise = rng.standard_normal((n, 6)) * np.sqrt(model.uniquenesses())
    X = latent @ P.T + noise
    a = model.path_mag_se
    se = a * latent[:, 0] + math.sqrt(1.0 - a * a) * rng.standard_normal(n)
    slope = link_slope(model.path_se_sq, model.sq_link)
    if Link(model.sq_link) is Link.PROBIT:
        prob = stats.norm.cdf(slope * se)
    else:
        prob = special.expit(slope * se)
    sq = (rng.uniform(size=n) < prob).astype(np.int64)
    cols = {name: X[:, j] for j, name in enumerate(FEATURE_NAMES)}
    cols[SE] = se
    cols[SQ] = sq
    kinds = {name: Kind.CONTINUOUS for name in cols}
    kinds[SQ] = Kind.DISCRETE
    truth = LatentTruth(latent[:, 0], latent[:, 1], se, prob, P, Phi)
    return MixedDataset(cols, kinds), truth


def replicate_seed(seed: int, replicate: int) -> int:
    """Per-replicate seed: ``seed + replicate``."""
    return int(seed) + int(replicate)


# --------------------------------------------------------------------------
# raw EDA traces

SCR_RISE_S = 2.0
SCR_DECAY_S = 8.0
MIN_EVENT_GAP_S = 1.0


@dataclass(frozen=True)
class StormBlock:
    start_s: float
    end_s: float
    interval_s: float
    amplitude_us: float

    def onsets(self):
        if self.interval_s <= 0 or self.end_s <= self.start_s:
            raise ScriptError(f"bad storm block {self}")
        return np.arange(self.start_s, self.end_s, self.interval_s)


@dataclass(frozen=True)
class TraceScript:
    duration_s: float = 28800.0
    rate_hz: float = 4.0
    baseline_us: float = 0.3
    noise_sd_us: float = 0.0
    events: tuple = ()  # (onset_s, amplitude_us) pairs
    storms: tuple = ()  # StormBlock
    start_time_s: float = 0.0

    def all_events(self):
        ev = [(float(t), float(a)) for t, a in self.events]
        for block in self.storms:
            ev.extend((float(t), float(block.amplitude_us)) for t in block.onsets())
        ev.sort()
        return ev


@dataclass(frozen=True)
class PlantedTruth:
    onsets_s: np.ndarray
    peak_times_s: np.ndarray
    amplitudes_us: np.ndarray
    extra: dict = field(default_factory=dict)

    @property
    def count(self):
        return int(self.onsets_s.size)


def scr_shape(t, amplitude):
    """Canonical response: raised-cosine rise, exponential decay."""
    t = np.asarray(t, dtype=np.float64)
    out = np.zeros_like(t)
    rising = (t >= 0) & (t < SCR_RISE_S)
    out[rising] = amplitude * 0.5 * (1.0 - np.cos(np.pi * t[rising] / SCR_RISE_S))
    decaying = t >= SCR_RISE_S
    out[decaying] = amplitude * np.exp(-(t[decaying] - SCR_RISE_S) / SCR_DECAY_S)
    return out


def generate_eda_trace(script: TraceScript, seed: int = 0):
    if script.rate_hz < 1:
        raise ScriptError("rate_hz must be at least 1")
    if script.duration_s <= 0:
        raise ScriptError("duration_s must be positive")
    events = script.all_events()
    onsets = np.array([t for t, _ in events], dtype=np.float64)
    amps = np.array([a for _, a in events], dtype=np.float64)
    if onsets.size:
        gaps = np.diff(onsets)
        if np.any(gaps < MIN_EVENT_GAP_S):
            i = int(np.argmax(gaps < MIN_EVENT_GAP_S))
            raise ScriptError(f"events at {onsets[i]} s and {onsets[i + 1]} s are closer than {MIN_EVENT_GAP_S} s")
        if onsets[0] < 0 or onsets[-1] + SCR_RISE_S >= script.duration_s:
            raise ScriptError("every event must peak inside the trace")
    n = int(round(script.duration_s * script.rate_hz))
    t = np.arange(n) / script.rate_hz
    x = np.full(n, float(script.baseline_us))
    span = int(math.ceil((SCR_RISE_S + 12 * SCR_DECAY_S) * script.rate_hz))
    for t0, a in zip(onsets, amps):
        i0 = int(math.ceil(t0 * script.rate_hz))
        i1 = min(n, i0 + span)
        x[i0:i1] += scr_shape(t[i0:i1] - t0, a)
    if script.noise_sd_us > 0:
        x += np.random.default_rng(seed).normal(0.0, script.noise_sd_us, size=n)
    trace = SignalTrace(Channel.EDA, float(script.start_time_s), float(script.rate_hz), x)
    return trace, PlantedTruth(onsets, onsets + SCR_RISE_S, amps)


def parse_trace_script(text: str) -> TraceScript:
    """Read ``key = value`` lines.

    Keys: ``duration_s``, ``rate_hz``, ``baseline_us``, ``noise_sd_us``,
    ``start_time_s``, ``events`` (``onset:amplitude`` comma list) and
    ``storms`` (``start-end@interval:amplitude`` comma list).
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScriptError(f"line {lineno}: expected key = value")
        key, val = (s.strip() for s in line.split("=", 1))
        values[key] = (lineno, val)
    kwargs = {}
    numeric = ("duration_s", "rate_hz", "baseline_us", "noise_sd_us", "start_time_s")
    for key, (lineno, val) in values.items():
        try:
            if key in numeric:
                kwargs[key] = float(val)
            elif key == "events":
                kwargs["events"] = tuple(
                    tuple(float(p) for p in item.split(":")) for item in val.split(",") if item.strip()
                )
                if any(len(e) != 2 for e in kwargs["events"]):
                    raise ValueError
            elif key == "storms":
                blocks = []
                for item in val.split(","):
                    if not item.strip():
                        continue
                    span, amp = item.split(":")
                    rng_part, interval = span.split("@")
                    start, end = rng_part.split("-")
                    blocks.append(StormBlock(float(start), float(end), float(interval), float(amp)))
                kwargs["storms"] = tuple(blocks)
            else:
                raise ScriptError(f"line {lineno}: unknown key {key!r}")
        except ValueError:
            raise ScriptError(f"line {lineno}: cannot parse {key} = {val!r}") from None
    return TraceScript(**kwargs)


def with_overrides(model: GroundTruthModel, **kw) -> GroundTruthModel:
    return replace(model, **kw)


# --------------------------------------------------------------------------
# raw session trees

def generate_acc_traces(duration_s, rate_hz, wake_epochs, epoch_len_s=30.0, start_time_s=0.0, seed=0,
                        movement_g=0.3, noise_g=0.002):
    """Three ACC axes at rest (gravity on Z) with movement in ``wake_epochs``."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * rate_hz))
    xyz = np.zeros((n, 3))
    xyz[:, 2] = 1.0
    xyz += rng.normal(0.0, noise_g, size=(n, 3))
    per = int(round(epoch_len_s * rate_hz))
    for e in wake_epochs:
        lo, hi = e * per, min(n, (e + 1) * per)
        xyz[lo:hi] += rng.normal(0.0, movement_g, size=(hi - lo, 3))
    return tuple(SignalTrace(axis, float(start_time_s), float(rate_hz), xyz[:, j])
                 for j, axis in enumerate((Channel.ACC_X, Channel.ACC_Y, Channel.ACC_Z)))


def generate_session_tree(root, participants=2, nights=2, seed=0, duration_s=3600.0,
                          eda_rate_hz=4.0, acc_rate_hz=8.0, first_night="2017-03-01"):
    """Write ``<root>/<participant>/<date>/{EDA,ACC}.csv`` and ``psqi.csv``.

    Each night starts at 23:00 UTC. Events, wake epochs and the report are
    drawn from ``seed``; the report's time in bed equals the recording
    length. Returns the written reports.
    """
    root = Path(root)
    rng = np.random.default_rng(seed)
    day0 = date.fromisoformat(first_night)
    n_epochs = int(duration_s // 30.0)
    reports = []
    for p in range(participants):
        pid = f"P{p + 1:02d}"
        for i in range(nights):
            night = day0 + timedelta(days=i)
            start = datetime.combine(night, time(23, 0), tzinfo=timezone.utc).timestamp()
            n_ev = int(rng.integers(5, 25))
            onsets = np.sort(rng.choice(np.arange(10, int(duration_s) - 20, 5), size=n_ev, replace=False))
            amps = rng.uniform(0.08, 0.4, size=n_ev)
            script = TraceScript(duration_s=duration_s, rate_hz=eda_rate_hz, baseline_us=0.3,
                                 noise_sd_us=0.002, events=tuple(zip(onsets, amps)), start_time_s=start)
            eda, _ = generate_eda_trace(script, seed=int(rng.integers(2**31)))
            wake = np.flatnonzero(rng.uniform(size=n_epochs) < rng.uniform(0.05, 0.3))
            acc = generate_acc_traces(duration_s, acc_rate_hz, wake, start_time_s=start,
                                      seed=int(rng.integers(2**31)))
            folder = root / pid / night.isoformat()
            folder.mkdir(parents=True, exist_ok=True)
            (folder / "EDA.csv").write_bytes(format_channel_file([eda]))
            (folder / "ACC.csv").write_bytes(format_channel_file(acc))
            in_bed = duration_s / 60.0
            asleep = round(in_bed * (1.0 - rng.uniform(0.02, 0.3)), 1)
            reports.append(NightReport(pid, night, asleep, in_bed, int(rng.integers(1, 5))))
    root.mkdir(parents=True, exist_ok=True)
    (root / "psqi.csv").write_bytes(format_report_log(reports))
    return reports
