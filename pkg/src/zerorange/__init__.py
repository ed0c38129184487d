"""Invariant measures of condensing zero-range processes."""

from .model import (
    CriticalConstants,
    Family,
    ModelParams,
    WeightTable,
    build_weight_table,
    critical_constants,
    jump_rate,
)

__version__ = "0.1.0"
