"""
Run reports computed from event logs.
"""

import math
from dataclasses import dataclass
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ..config import DEFAULT_CAPACITY_WINDOW
from ..firewall.latency import CapacityStats, capacity_speeds
from ..sim.events import EventKind, EventLog, LogRecord

# Tolerance for float drift between scheduled and dispatched times.
_TIME_EPS = 1e-9


class MalformedLogError(ValueError):
    """An event log row contradicts the rest of the log."""

    def __init__(self, record: LogRecord, problem: str) -> None:
        super().__init__(f"Log row {record.seq} ({record.kind.value} at t={record.time}): {problem}")
        self.record = record


class DelayStats(NamedTuple):
    """Setup delay statistics (s); NaN when there are no samples."""
    mean: float
    p95: float
    max: float
    count: int

    @classmethod
    def from_samples(cls, samples: Sequence[float]) -> "DelayStats":
        if len(samples) == 0:
            return cls(math.nan, math.nan, math.nan, 0)
        values = np.asarray(samples, dtype=float)
        return cls(
            float(values.mean()),
            float(np.percentile(values, 95)),
            float(values.max()),
            int(values.size),
        )


class SetupDelay(NamedTuple):
    """Setup delays split by the emergency flag."""
    normal: DelayStats
    emergency: DelayStats


@dataclass(frozen=True)
class RunReport:
    """
    Quantitative outcome of one run.

    Attributes:
        seed: Run seed.
        controller: Firewall controller kind.
        horizon: Run horizon (s).
        truncated: Work was still pending at the horizon.
        false_positives: User transactions abandoned after giving up.
        false_negatives: Attack packets that reached the proxy.
        setup_delay: First send to first reply, by emergency flag.
        rules_requested: Install requests emitted by the engine.
        rules_installed: Installs that became effective within the run.
        rules_removed: Removals that became effective within the run.
        install_timeline: (elapsed_s, cumulative_installed) per distinct
            install time.
        capacity: Rule-adding speeds at the start and end of the run.
        worst_case_install_lag: Largest request-to-effective delay (s).
        backlog_onset_installed: Installed rules when an install first had
            to wait for the busy firewall; None if none did.
        last_request_s: Time of the last install request (s), the earliest
            possible completion; None without requests.
        transactions: User transactions started.
        completed: User transactions that got a reply.
        truncated_transactions: User transactions still open at the horizon.
        proxy_arrivals: Requests that reached the proxy.
        attack_packets: Attack packets seen at the firewall.
    """

    seed: int
    controller: str
    horizon: float
    truncated: bool
    false_positives: int
    false_negatives: int
    setup_delay: SetupDelay
    rules_requested: int
    rules_installed: int
    rules_removed: int
    install_timeline: Tuple[Tuple[float, int], ...]
    capacity: CapacityStats
    worst_case_install_lag: float
    backlog_onset_installed: Optional[int]
    last_request_s: Optional[float]
    transactions: int
    completed: int
    truncated_transactions: int
    proxy_arrivals: int
    attack_packets: int

    @property
    def is_empty(self) -> bool:
        """Nothing happened during the run."""
        return (
            self.transactions == 0
            and self.rules_requested == 0
            and self.proxy_arrivals == 0
            and self.attack_packets == 0
        )

    @property
    def last_install_s(self) -> Optional[float]:
        return self.install_timeline[-1][0] if self.install_timeline else None


def _check_order(log: EventLog) -> None:
    previous = -math.inf
    for index, record in enumerate(log.records):
        if record.seq != index:
            raise MalformedLogError(record, f"sequence number should be {index}")
        if record.time < previous:
            raise MalformedLogError(record, f"time goes back from {previous}")
        previous = record.time


def _require(record: LogRecord, value: Optional[float], name: str) -> float:
    if value is None:
        raise MalformedLogError(record, f"missing {name}")
    return value


def analyze(log: EventLog, window: int = DEFAULT_CAPACITY_WINDOW) -> RunReport:
    """
    Compute the run report of an event log.

    A pure function of the log: analysing the same log twice gives equal
    reports.

    Args:
        log: Complete event log of one run.
        window: Capacity window in installs (default: 1000).

    Returns:
        RunReport: Every metric of the run.

    Raises:
        MalformedLogError: If rows are out of order, lack their rule or
            delay details, or report more installs than requests.
    """
    _check_order(log)

    delays: List[float] = []
    emergency_delays: List[float] = []
    requested: List[float] = []
    installed: List[float] = []
    waits: List[float] = []
    install_requests: List[float] = []
    counts = {kind: 0 for kind in EventKind}
    false_negatives = 0
    proxy_arrivals = 0
    attack_packets = 0

    for record in log:
        counts[record.kind] += 1
        if record.kind in (EventKind.ARRIVAL, EventKind.UNPARSEABLE) and record.attack:
            attack_packets += 1
        if record.kind is EventKind.ARRIVAL and record.action == "pass":
            proxy_arrivals += 1
            if record.attack:
                false_negatives += 1
        elif record.kind is EventKind.TXN_COMPLETE:
            delay = _require(record, record.delay, "setup delay")
            if delay < 0:
                raise MalformedLogError(record, f"negative setup delay {delay}")
            (emergency_delays if record.emergency else delays).append(delay)
        elif record.kind is EventKind.RULE_REQUEST and record.action == "install":
            install_requests.append(_require(record, record.requested_at, "request time"))
        elif record.kind is EventKind.RULE_INSTALLED:
            at = _require(record, record.requested_at, "request time")
            if record.time + _TIME_EPS < at:
                raise MalformedLogError(record, f"installed before its request at {at}")
            requested.append(at)
            installed.append(record.time)
            waits.append(record.queue_wait or 0.0)

    if len(installed) > len(install_requests):
        raise MalformedLogError(
            log.records[-1],
            f"{len(installed)} installs but only {len(install_requests)} requests",
        )

    installed_at = np.asarray(installed, dtype=float)
    lags = installed_at - np.asarray(requested, dtype=float)
    times, per_time = np.unique(installed_at, return_counts=True)
    timeline = tuple(
        (float(t), int(n)) for t, n in zip(times, np.cumsum(per_time))
    )
    onset = next((i for i, wait in enumerate(waits) if wait > _TIME_EPS), None)

    return RunReport(
        seed=log.seed,
        controller=log.controller,
        horizon=log.horizon,
        truncated=log.truncated,
        false_positives=counts[EventKind.TXN_FAILED],
        false_negatives=false_negatives,
        setup_delay=SetupDelay(
            DelayStats.from_samples(delays), DelayStats.from_samples(emergency_delays)
        ),
        rules_requested=len(install_requests),
        rules_installed=len(installed),
        rules_removed=counts[EventKind.RULE_REMOVED],
        install_timeline=timeline,
        capacity=capacity_speeds(requested, installed, window),
        worst_case_install_lag=float(lags.max()) if lags.size else 0.0,
        backlog_onset_installed=onset,
        last_request_s=max(install_requests) if install_requests else None,
        transactions=counts[EventKind.TXN_START],
        completed=counts[EventKind.TXN_COMPLETE],
        truncated_transactions=counts[EventKind.TXN_TRUNCATED],
        proxy_arrivals=proxy_arrivals,
        attack_packets=attack_packets,
    )
