"""
Event log of a simulation run.
"""

import csv
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, List, Optional, Union


class EventKind(Enum):
    """What a log row records."""
    ARRIVAL = "arrival"  # request inspected at the firewall
    UNPARSEABLE = "unparseable"
    RETRANSMIT = "retransmit"
    PROXY_REPLY = "proxy_reply"
    RULE_REQUEST = "rule_request"
    RULE_INSTALLED = "rule_installed"
    RULE_REMOVED = "rule_removed"
    BATCH_TICK = "batch_tick"
    EXPIRY_SWEEP = "expiry_sweep"
    TXN_START = "txn_start"
    TXN_COMPLETE = "txn_complete"
    TXN_FAILED = "txn_failed"
    TXN_TRUNCATED = "txn_truncated"


@dataclass(frozen=True)
class LogRecord:
    """
    One log row.

    Attributes:
        time: Simulation time (s).
        seq: Position in the log.
        kind: Row kind.
        src: Sender address, 'ip:port'.
        dst: Receiver address, 'ip:port'.
        method: Request method or status code.
        key_digest: Pinhole key digest, if any.
        action: 'pass'/'drop' for arrivals, 'install'/'remove' for rule
            rows, batch size for batch ticks.
        txn_id: User agent transaction, if any.
        emergency: Emergency request.
        attack: Sent by an attacker.
        requested_at: Rule request time (s), rule rows only.
        queue_wait: Time the rule waited for the busy firewall (s).
        delay: Setup delay (s), completed transactions only.
    """

    time: float
    seq: int
    kind: EventKind
    src: str = ""
    dst: str = ""
    method: str = ""
    key_digest: str = ""
    action: str = ""
    txn_id: Optional[str] = None
    emergency: bool = False
    attack: bool = False
    requested_at: Optional[float] = None
    queue_wait: Optional[float] = None
    delay: Optional[float] = None


CSV_COLUMNS = ("time_s", "kind", "src", "dst", "method", "key_digest", "action")


@dataclass
class EventLog:
    """
    Ordered record of everything a run did.

    Rows are appended in dispatch order, so ``time`` never decreases and
    ``seq`` counts up from 0.

    Attributes:
        horizon: Configured run horizon (s).
        seed: Seed of the run.
        controller: Firewall controller kind of the run.
        truncated: True when work was still pending at the horizon.
        records: Log rows.
    """

    horizon: float = 0.0
    seed: int = 0
    controller: str = ""
    truncated: bool = False
    records: List[LogRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[LogRecord]:
        return iter(self.records)

    def add(self, time: float, kind: EventKind, **details) -> LogRecord:
        """Append a row stamped with the next sequence number."""
        record = LogRecord(time=time, seq=len(self.records), kind=kind, **details)
        self.records.append(record)
        return record

    def of_kind(self, kind: Union[EventKind, str]) -> List[LogRecord]:
        kind = EventKind(kind)
        return [record for record in self.records if record.kind is kind]

    def to_csv(self, path: Union[str, Path]) -> Path:
        """
        Write the log as CSV (time_s, kind, src, dst, method, key_digest,
        action).

        Raises:
            OSError: If the file cannot be written; the message names the
                path.
        """
        path = Path(path)
        try:
            with path.open("w", newline="") as handle:
                writer = csv.writer(handle)
                writer.writerow(CSV_COLUMNS)
                for record in self.records:
                    writer.writerow(
                        [
                            f"{record.time:.6f}",
                            record.kind.value,
                            record.src,
                            record.dst,
                            record.method,
                            record.key_digest,
                            record.action,
                        ]
                    )
        except OSError as e:
            raise OSError(f"Could not write event log '{path}': {e}") from e
        return path
