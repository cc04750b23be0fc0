"""Time the compiled kernels against the pure-Python loops.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from sleepeda import _pykernels
from sleepeda.synth import TraceScript, generate_eda_trace

try:
    from sleepeda import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases():
    onsets = np.arange(300.0, 28000.0, 97.0)
    script = TraceScript(duration_s=28800.0, rate_hz=4.0, noise_sd_us=0.005,
                         events=tuple((t, 0.15) for t in onsets))
    x = np.ascontiguousarray(generate_eda_trace(script, seed=0)[0].samples)
    flags = np.ascontiguousarray(np.random.default_rng(0).uniform(size=960 * 100) < 0.4, dtype=np.uint8)
    counts = np.ascontiguousarray(np.random.default_rng(1).uniform(0, 200, 960 * 100))
    w = np.array([404.0, 598.0, 326.0, 441.0, 1408.0, 508.0, 350.0])
    return {
        "scan_peaks (8 h at 4 Hz)": lambda m: m.scan_peaks(x, 4.0, 0.05, 0.01),
        "run_lengths (96k epochs)": lambda m: m.run_lengths(flags),
        "cole_scores (96k epochs)": lambda m: m.cole_scores(counts, w, 1e-5),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':<28}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in cases().items():
        py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{name:<28}{py:12.2f}{'n/a':>12}{'':>10}")
            continue
        cy = min(timeit.repeat(lambda: fn(_ckernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<28}{py:12.2f}{cy:12.3f}{py / cy:9.0f}x")


if __name__ == "__main__":
    main()
