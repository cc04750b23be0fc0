# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the scan kernels in :mod:`sleepeda._pykernels`.

Both modules must return identical results; ``tests/test_kernels.py``
checks this on random inputs.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


def scan_peaks(const double[::1] x, double rate_hz, double min_amplitude, double min_rise_rate):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, trough = 0, top = 0
    cdef int last_dir = 0
    cdef double d, amp, rise_s, slope
    idx = []
    amps = []
    rates = []
    for i in range(1, n):
        d = x[i] - x[i - 1]
        if d > 0:
            if last_dir <= 0:
                trough = i - 1
            top = i
            last_dir = 1
        elif d < 0:
            if last_dir == 1:
                amp = x[top] - x[trough]
                rise_s = (top - trough) / rate_hz
                slope = amp / rise_s
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


def run_lengths(const unsigned char[::1] flags):
    cdef Py_ssize_t n = flags.shape[0]
    cdef Py_ssize_t i, start = -1
    starts = []
    lengths = []
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


def cole_scores(const double[::1] counts, const double[::1] weights, double scale):
    # weights ordered by lag -4..+2
    cdef Py_ssize_t n = counts.shape[0]
    cdef Py_ssize_t i, k, j
    cdef double acc
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] res = out
    for i in range(n):
        acc = 0.0
        for k in range(7):
            j = i + k - 4
            if 0 <= j < n:
                acc += weights[k] * counts[j]
        res[i] = scale * acc
    return out
