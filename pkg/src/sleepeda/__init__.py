"""EDA-based sleep analytics.

Stages: :mod:`ingest` (sensor files and self-reports), :mod:`eda_features`
and :mod:`actigraphy` (per-night features and targets), :mod:`factors`
(EFA), :mod:`causal` (structure search), :mod:`sem` (path models),
:mod:`predictors` (SE/SQ models) and :mod:`synth` (ground-truth data).
"""
__version__ = "0.1.0"

from .errors import SleepEdaError  # noqa: E402

__all__ = ["__version__", "SleepEdaError"]
