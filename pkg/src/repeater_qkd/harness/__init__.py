"""Threshold searches, optimization, sweeps and the command-line interface."""

from .config import load_config
from .search import (
    Axis,
    ConfigError,
    OptimizeResult,
    SweepSpec,
    ThresholdQuery,
    ThresholdResult,
    bisect_threshold,
    evaluate,
    optimize,
    sweep,
)

__all__ = [
    "Axis",
    "ConfigError",
    "OptimizeResult",
    "SweepSpec",
    "ThresholdQuery",
    "ThresholdResult",
    "bisect_threshold",
    "evaluate",
    "load_config",
    "optimize",
    "sweep",
]
