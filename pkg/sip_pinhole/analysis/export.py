"""
CSV export, text rendering and multi-seed aggregation of run reports.
"""

import csv
import math
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from ..firewall.controller import INSTALLED_LOG_COLUMNS
from ..sim.events import EventKind, EventLog
from .report import RunReport

TIMELINE_COLUMNS = ("elapsed_s", "cumulative_installed")
SUMMARY_COLUMNS = ("metric", "value")
CAPACITY_COLUMNS = ("mode", "rules", "init_speed", "fin_speed")


def _fmt(value: Optional[Union[float, int, bool]]) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf"
    return f"{value:.6f}"


def summary_rows(report: RunReport) -> List[Tuple[str, str]]:
    """
    One (metric, value) pair per scalar metric of the report.

    Returns:
        list[tuple[str, str]]: Rows in a fixed order.
    """
    rows = [
        ("seed", report.seed),
        ("controller", report.controller),
        ("horizon_s", report.horizon),
        ("truncated", report.truncated),
        ("false_positives", report.false_positives),
        ("false_negatives", report.false_negatives),
        ("transactions", report.transactions),
        ("completed", report.completed),
        ("truncated_transactions", report.truncated_transactions),
        ("proxy_arrivals", report.proxy_arrivals),
        ("attack_packets", report.attack_packets),
    ]
    for label, stats in (
        ("setup_delay_normal", report.setup_delay.normal),
        ("setup_delay_emergency", report.setup_delay.emergency),
    ):
        rows += [
            (f"{label}_mean_s", stats.mean),
            (f"{label}_p95_s", stats.p95),
            (f"{label}_max_s", stats.max),
            (f"{label}_count", stats.count),
        ]
    rows += [
        ("rules_requested", report.rules_requested),
        ("rules_installed", report.rules_installed),
        ("rules_removed", report.rules_removed),
        ("last_request_s", report.last_request_s),
        ("last_install_s", report.last_install_s),
        ("worst_case_install_lag_s", report.worst_case_install_lag),
        ("backlog_onset_installed", report.backlog_onset_installed),
        ("init_speed", report.capacity.initial_speed),
        ("fin_speed", report.capacity.final_speed),
        ("capacity_window", report.capacity.window),
        ("capacity_flagged", report.capacity.flagged),
    ]
    return [(name, value if isinstance(value, str) else _fmt(value)) for name, value in rows]


def _write_rows(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    try:
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as e:
        raise OSError(f"Could not write '{path}': {e}") from e
    return path


def emit_csv(
    report: RunReport,
    timeline_path: Union[str, Path],
    summary_path: Union[str, Path],
    capacity_path: Optional[Union[str, Path]] = None,
) -> None:
    """
    Write a report as CSV files.

    The timeline file lists (elapsed_s, cumulative_installed) for
    re-plotting install curves; the summary file has one row per metric;
    the optional capacity file has one "mode,rules,init_speed,fin_speed"
    row. A report of an empty run gives header-only files.

    Args:
        report: Run report.
        timeline_path: Timeline CSV.
        summary_path: Summary CSV.
        capacity_path: Capacity CSV (skipped if None).

    Raises:
        OSError: If a file cannot be written; the message names the path.
    """
    _write_rows(
        timeline_path,
        TIMELINE_COLUMNS,
        ((_fmt(t), n) for t, n in report.install_timeline),
    )
    _write_rows(
        summary_path, SUMMARY_COLUMNS, [] if report.is_empty else summary_rows(report)
    )
    if capacity_path is not None:
        rows = []
        if report.rules_installed:
            rows.append(
                (
                    report.controller,
                    report.rules_installed,
                    _fmt(report.capacity.initial_speed),
                    _fmt(report.capacity.final_speed),
                )
            )
        _write_rows(capacity_path, CAPACITY_COLUMNS, rows)


def render_table(report: RunReport) -> str:
    """
    Human-readable summary of a report.

    Returns:
        str: Two aligned columns, metric and value.
    """
    rows = summary_rows(report)
    width = max(len(name) for name, _ in rows)
    lines = [f"{'metric'.ljust(width)}  value", f"{'-' * width}  -----"]
    lines += [f"{name.ljust(width)}  {value}" for name, value in rows]
    return "\n".join(lines)


class SeedAggregate(NamedTuple):
    """
    Summary over the seeds of one scenario.

    Attributes:
        seeds: Number of runs.
        mean_timeline: (elapsed_s, mean cumulative installs) on a common
            grid.
        worst_initial_speed: Lowest initial speed of any run.
        worst_final_speed: Lowest final speed of any run.
        worst_install_lag: Highest install lag of any run (s).
        false_positives: Sum over runs.
        false_negatives: Sum over runs.
    """

    seeds: int
    mean_timeline: Tuple[Tuple[float, float], ...]
    worst_initial_speed: float
    worst_final_speed: float
    worst_install_lag: float
    false_positives: int
    false_negatives: int


def _cumulative_at(report: RunReport, grid: np.ndarray) -> np.ndarray:
    if not report.install_timeline:
        return np.zeros_like(grid)
    times = np.array([t for t, _ in report.install_timeline])
    totals = np.array([n for _, n in report.install_timeline], dtype=float)
    index = np.searchsorted(times, grid, side="right")
    return np.where(index > 0, totals[np.maximum(index - 1, 0)], 0.0)


def aggregate_seeds(reports: Sequence[RunReport], grid_step: float = 0.5) -> SeedAggregate:
    """
    Point-wise mean timeline and worst-case figures across seeds.

    Args:
        reports: Reports of the same scenario under different seeds.
        grid_step: Spacing of the common time grid (s).

    Returns:
        SeedAggregate: Aggregated figures.

    Raises:
        ValueError: If reports is empty or grid_step is not positive.
    """
    if not reports:
        raise ValueError("Need at least one report to aggregate.")
    if grid_step <= 0:
        raise ValueError(f"Grid step must be positive. Got: {grid_step}")
    end = max((r.last_install_s or 0.0) for r in reports)
    grid = np.arange(0.0, end + grid_step, grid_step)
    mean = np.mean([_cumulative_at(r, grid) for r in reports], axis=0)
    return SeedAggregate(
        seeds=len(reports),
        mean_timeline=tuple((float(t), float(n)) for t, n in zip(grid, mean)),
        worst_initial_speed=min(r.capacity.initial_speed for r in reports),
        worst_final_speed=min(r.capacity.final_speed for r in reports),
        worst_install_lag=max(r.worst_case_install_lag for r in reports),
        false_positives=sum(r.false_positives for r in reports),
        false_negatives=sum(r.false_negatives for r in reports),
    )


def write_mean_timeline(aggregate: SeedAggregate, path: Union[str, Path]) -> Path:
    """Write the mean timeline as CSV (elapsed_s, mean_installed)."""
    return _write_rows(
        path,
        ("elapsed_s", "mean_installed"),
        ((_fmt(t), _fmt(n)) for t, n in aggregate.mean_timeline),
    )


def write_installs(log: EventLog, path: Union[str, Path]) -> Path:
    """
    Write the installs that became effective during a run as CSV
    (key_digest, requested_at_s, installed_at_s).
    """
    return _write_rows(
        path,
        INSTALLED_LOG_COLUMNS,
        (
            (record.key_digest, _fmt(record.requested_at), _fmt(record.time))
            for record in log.of_kind(EventKind.RULE_INSTALLED)
        ),
    )
