"""Batch figure rendering for sweep CSVs produced by the feelab CLI.

This package reads the documented CSV schemas from disk; it does not
import the simulator.
"""

__version__ = "0.1.0"

from .frame import SchemaError, SweepFrame
from .render import plot_volume_vs_capacity, plot_volume_vs_penalty

__all__ = [
    "SchemaError",
    "SweepFrame",
    "plot_volume_vs_capacity",
    "plot_volume_vs_penalty",
]
