"""
Firewall controllers with real-time and batched rule updates.

The firewall is default-deny for proxy-bound requests. Pinhole rules are
pushed by a controller and become effective only once the (slow) rule
installation has completed. A single busy-until time serializes all rule
operations, as a kernel lock would.
"""

import csv
import logging
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Deque, Dict, Iterable, List, Optional, Set, Tuple, Union

from ..config import (
    DEFAULT_BATCH_INTERVAL,
    ControllerKind,
    KeyStrategy,
    get_controller_kind,
)
from ..pinhole.keys import PinholeKey, derive_key, key_digest
from ..sip.message import SipMessage
from .latency import LatencyModel
from .rules import RuleOp, RuleRecord, RuleUpdate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class _RuleWindow:
    installed_at: float
    removed_at: Optional[float] = None

    def covers(self, now: float) -> bool:
        return self.installed_at <= now and (self.removed_at is None or now < self.removed_at)


class Firewall(ABC):
    """
    Perimeter firewall with a controller-managed pinhole rule set.

    Subclasses decide when queued rule updates are handed to the firewall;
    the base class does the cost accounting and answers rule lookups.

    Args:
        model: Latency model for rule operations.
    """

    kind: ControllerKind

    def __init__(self, model: Optional[LatencyModel] = None) -> None:
        self.model = model if model is not None else LatencyModel.zero()
        self.busy_until = 0.0
        self.batch_count = 0
        self.installed_log: List[RuleRecord] = []
        self.removal_log: List[RuleRecord] = []
        self._queue: Deque[RuleUpdate] = deque()
        self._windows: Dict[PinholeKey, List[_RuleWindow]] = {}
        # Desired state of every key once all queued updates are applied.
        self._wanted: Set[PinholeKey] = set()
        self._committed = 0

    def __repr__(self) -> str:
        return (
            f"{type(self).__name__}(committed={self._committed}, "
            f"pending={len(self._queue)}, busy_until={self.busy_until:.3f})"
        )

    @property
    def committed(self) -> int:
        """Rules installed or scheduled for installation, net of removals."""
        return self._committed

    @property
    def pending(self) -> Tuple[RuleUpdate, ...]:
        """Updates accepted but not yet handed to the firewall, FIFO."""
        return tuple(self._queue)

    def _accept(self, update: RuleUpdate) -> bool:
        if update.op is RuleOp.INSTALL:
            if update.key in self._wanted:
                return False
            self._wanted.add(update.key)
        else:
            if update.key not in self._wanted:
                return False
            self._wanted.discard(update.key)
        self._queue.append(update)
        return True

    @abstractmethod
    def submit(self, update: RuleUpdate, now: float) -> List[RuleRecord]:
        """
        Accept a rule update from the pinhole engine.

        Duplicate installs (key already installed or pending) and removals
        of keys that are not installed are ignored.

        Args:
            update: Install or remove request.
            now: Simulation time (s).

        Returns:
            list[RuleRecord]: Operations scheduled by this call, each with
            its completion time.
        """

    def _commit(self, update: RuleUpdate, ready: float, start: float, done: float) -> RuleRecord:
        record = RuleRecord(
            op=update.op,
            key=update.key,
            requested_at=update.requested_at,
            completed_at=done,
            queue_wait=start - ready,
        )
        windows = self._windows.setdefault(update.key, [])
        if update.op is RuleOp.INSTALL:
            windows.append(_RuleWindow(done))
            self.installed_log.append(record)
            self._committed += 1
        else:
            windows[-1] = _RuleWindow(windows[-1].installed_at, done)
            self.removal_log.append(record)
            self._committed -= 1
        return record

    def is_effective(self, key: PinholeKey, now: float) -> bool:
        """
        Whether an ALLOW rule for key is in force at time now.

        A rule is in force from its install completion (inclusive) until
        its removal completes.
        """
        return any(window.covers(now) for window in self._windows.get(key, ()))

    def permits(self, msg: SipMessage, strategy: Union[KeyStrategy, str], now: float) -> bool:
        """
        Default-deny check of a proxy-bound request.

        Args:
            msg: Parsed datagram.
            strategy: Key strategy of the installed rules.
            now: Simulation time (s).

        Returns:
            bool: True iff the request's pinhole rule is effective at now.
            Responses are never permitted inbound.
        """
        if not msg.is_request:
            return False
        return self.is_effective(derive_key(msg, strategy), now)

    def installed_keys(self, now: float) -> Set[PinholeKey]:
        """Keys whose rule is effective at now."""
        return {key for key in self._windows if self.is_effective(key, now)}


class RealTimeFirewall(Firewall):
    """
    Controller that pushes every rule update as soon as it occurs.

    Each operation costs ``a + b * n`` with n rules committed.
    """

    kind = ControllerKind.REALTIME

    def submit(self, update: RuleUpdate, now: float) -> List[RuleRecord]:
        if not self._accept(update):
            return []
        return self.process_queue(now)

    def process_queue(self, now: float) -> List[RuleRecord]:
        """
        Hand every queued update to the firewall, one after another.

        Args:
            now: Simulation time (s).

        Returns:
            list[RuleRecord]: Scheduled operations in submission order.
        """
        scheduled = []
        while self._queue:
            update = self._queue.popleft()
            ready = max(now, update.requested_at)
            start = max(ready, self.busy_until)
            done = start + self.model.rule_cost(self._committed)
            self.busy_until = done
            scheduled.append(self._commit(update, ready, start, done))
        return scheduled


class BatchedFirewall(Firewall):
    """
    Controller that accumulates updates and pushes them once per interval.

    A batch costs ``c0 + c1 * n`` with n rules committed when it starts and
    all of its rules become effective together when it completes.

    Args:
        model: Latency model.
        interval: Push interval (s, default: 1.0).

    Raises:
        ValueError: If interval is not positive.
    """

    kind = ControllerKind.BATCHED

    def __init__(
        self,
        model: Optional[LatencyModel] = None,
        interval: float = DEFAULT_BATCH_INTERVAL,
    ) -> None:
        if interval <= 0:
            raise ValueError(f"Batch interval must be positive. Got: {interval}")
        super().__init__(model)
        self.interval = interval
        self._backlogged = False

    def submit(self, update: RuleUpdate, now: float) -> List[RuleRecord]:
        self._accept(update)
        return []

    def tick(self, now: float) -> List[RuleRecord]:
        """
        Push all accumulated updates as one batch.

        Args:
            now: Interval boundary (s).

        Returns:
            list[RuleRecord]: The batch's operations, sharing one completion
            time; empty if nothing had accumulated.
        """
        if not self._queue:
            return []
        start = max(now, self.busy_until)
        done = start + self.model.batch_cost(self._committed)
        if start > now and not self._backlogged:
            self._backlogged = True
            logger.info(
                "batch at t=%.3f waits %.3f s for the firewall (%d rules committed)",
                now, start - now, self._committed,
            )
        batch = list(self._queue)
        self._queue.clear()
        self.busy_until = done
        self.batch_count += 1
        logger.debug(
            "batch %d: %d update(s) at t=%.3f, effective at t=%.3f",
            self.batch_count, len(batch), now, done,
        )
        return [self._commit(update, now, start, done) for update in batch]


def make_firewall(
    kind: Union[ControllerKind, str],
    model: Optional[LatencyModel] = None,
    interval: float = DEFAULT_BATCH_INTERVAL,
) -> Firewall:
    """
    Build the firewall for a controller kind.

    Args:
        kind: 'realtime' or 'batched'.
        model: Latency model (default: zero latency).
        interval: Push interval for the batched controller (s).

    Returns:
        Firewall: RealTimeFirewall or BatchedFirewall.

    Examples:
        >>> make_firewall("batched", interval=2.0).interval
        2.0
    """
    kind = get_controller_kind(kind)
    if kind is ControllerKind.REALTIME:
        return RealTimeFirewall(model)
    return BatchedFirewall(model, interval)


INSTALLED_LOG_COLUMNS = ("key_digest", "requested_at_s", "installed_at_s")


def write_installed_log(records: Iterable[RuleRecord], path: Union[str, Path]) -> Path:
    """
    Write install records as CSV.

    Args:
        records: Install records, e.g. ``firewall.installed_log``.
        path: Output file.

    Returns:
        Path: The written file.

    Raises:
        OSError: If the file cannot be written; the message names the path.
    """
    path = Path(path)
    try:
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(INSTALLED_LOG_COLUMNS)
            for record in records:
                writer.writerow(
                    [
                        key_digest(record.key),
                        f"{record.requested_at:.6f}",
                        f"{record.installed_at:.6f}",
                    ]
                )
    except OSError as e:
        raise OSError(f"Could not write installed log '{path}': {e}") from e
    return path
