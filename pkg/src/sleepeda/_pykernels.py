"""Pure-Python scan kernels.

Reference implementations of the loops compiled in ``_ckernels.pyx``.
They are deliberately written as plain loops so that the two versions
share one control flow and agree bit for bit.
"""
import numpy as np


def scan_peaks(x, rate_hz, min_amplitude, min_rise_rate):
    """Find local maxima of ``x`` that rise far and fast enough.

    Each maximum is measured against the most recent local minimum (the
    first sample counts as a minimum when the signal starts by rising).
    Plateaus collapse: a flat top is located at its first sample and a
    flat bottom at its last sample. A rise that runs into the end of the
    signal is not a peak.

    Returns
    -------
    indices, amplitudes, rise_rates : ndarray
    """
    x = [float(v) for v in x]
    idx, amps, rates = [], [], []
    trough = top = 0
    last_dir = 0
    for i in range(1, len(x)):
        d = x[i] - x[i - 1]
        if d > 0:
            if last_dir <= 0:
                trough = i - 1
            top = i
            last_dir = 1
        elif d < 0:
            if last_dir == 1:
                amp = x[top] - x[trough]
                slope = amp / ((top - trough) / rate_hz)
                if amp >= min_amplitude and slope >= min_rise_rate:
                    idx.append(top)
                    amps.append(amp)
                    rates.append(slope)
            last_dir = -1
    return (
        np.asarray(idx, dtype=np.int64),
        np.asarray(amps, dtype=np.float64),
        np.asarray(rates, dtype=np.float64),
    )


def run_lengths(flags):
    """Start index and length of every maximal run of true values."""
    starts, lengths = [], []
    start = -1
    n = len(flags)
    for i in range(n):
        if flags[i]:
            if start < 0:
                start = i
        elif start >= 0:
            starts.append(start)
            lengths.append(i - start)
            start = -1
    if start >= 0:
        starts.append(start)
        lengths.append(n - start)
    return np.asarray(starts, dtype=np.int64), np.asarray(lengths, dtype=np.int64)


def cole_scores(counts, weights, scale):
    """Weighted moving sum over lags -4..+2 with zero padding."""
    n = len(counts)
    out = np.empty(n, dtype=np.float64)
    for i in range(n):
        acc = 0.0
        for k in range(7):
            j = i + k - 4
            if 0 <= j < n:
                acc += weights[k] * counts[j]
        out[i] = scale * acc
    return out
