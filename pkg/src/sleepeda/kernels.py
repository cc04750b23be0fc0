"""Kernel dispatch.

Uses the compiled extension when it was built and falls back to the
pure-Python loops otherwise. Set ``SLEEPEDA_PURE_PYTHON=1`` to force the
fallback (the benchmark and the equivalence tests do this per call by
importing both modules directly).
"""
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if not os.environ.get("SLEEPEDA_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        _impl = _pykernels


def scan_peaks(x, rate_hz, min_amplitude, min_rise_rate):
    x = np.ascontiguousarray(x, dtype=np.float64)
    return _impl.scan_peaks(x, float(rate_hz), float(min_amplitude), float(min_rise_rate))


def run_lengths(flags):
    flags = np.ascontiguousarray(flags, dtype=np.uint8)
    return _impl.run_lengths(flags)


def cole_scores(counts, weights, scale):
    counts = np.ascontiguousarray(counts, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if weights.shape != (7,):
        raise ValueError("Cole weights must hold 7 values (lags -4..+2)")
    return _impl.cole_scores(counts, weights, float(scale))
