"""
Run metrics: reports, CSV export and seed aggregation.
"""

from ..firewall.latency import CapacityStats
from .report import DelayStats, MalformedLogError, RunReport, SetupDelay, analyze
from .export import (
    SeedAggregate,
    aggregate_seeds,
    emit_csv,
    render_table,
    summary_rows,
    write_installs,
    write_mean_timeline,
)

__all__ = [
    "CapacityStats",
    "DelayStats",
    "MalformedLogError",
    "RunReport",
    "SetupDelay",
    "analyze",
    "SeedAggregate",
    "aggregate_seeds",
    "emit_csv",
    "render_table",
    "summary_rows",
    "write_installs",
    "write_mean_timeline",
]
