"""
Greylisting decision core.

Every inbound request is looked up in the pinhole database by its key.
Unknown keys are dropped and remembered; once a key has been seen often
enough (once for the immediate policy, twice for the deferred policy) an
install request for its pinhole is emitted. Later requests pass only when
the firewall reports the pinhole rule as effective, because packets
traverse the firewall, not the engine.
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Protocol, Tuple, Union

from ..config import (
    DEFAULT_EXPIRY_AFTER_IDLE,
    KeyStrategy,
    OpeningPolicy,
    get_key_strategy,
    get_opening_policy,
)
from ..firewall.rules import RuleUpdate
from ..sip.message import SipMessage
from .keys import PinholeKey, derive_key, key_digest

logger = logging.getLogger(__name__)


class RecordState(Enum):
    """Pinhole database entry state."""
    GREYLISTED = "greylisted"
    OPEN = "open"


class Action(Enum):
    """What happens to the inspected request."""
    DROP = "drop"
    PASS = "pass"


@dataclass
class PinholeRecord:
    """
    Pinhole database entry.

    Attributes:
        key: Pinhole key.
        sightings: Requests seen for the key, dropped ones included.
        state: Greylisted or open.
        first_seen: Time of the first sighting (s).
        last_hit: Time of the latest sighting (s).
        opened_at: Time the install request was emitted (s), if open.
    """

    key: PinholeKey
    sightings: int
    state: RecordState
    first_seen: float
    last_hit: float
    opened_at: Optional[float] = None


@dataclass(frozen=True)
class EngineConfig:
    """
    Engine settings.

    Attributes:
        strategy: Key strategy (default: source-ip).
        policy: Opening policy (default: immediate).
        expiry_after_idle: Idle time after which a pinhole closes (s,
            default 3600, the usual register refresh time).
    """

    strategy: Union[KeyStrategy, str] = KeyStrategy.SOURCE_IP
    policy: Union[OpeningPolicy, str] = OpeningPolicy.IMMEDIATE
    expiry_after_idle: float = DEFAULT_EXPIRY_AFTER_IDLE

    def __post_init__(self) -> None:
        object.__setattr__(self, "strategy", get_key_strategy(self.strategy))
        object.__setattr__(self, "policy", get_opening_policy(self.policy))
        if self.expiry_after_idle <= 0:
            raise ValueError(
                f"Expiry after idle must be positive. Got: {self.expiry_after_idle}"
            )

    @property
    def sightings_to_open(self) -> int:
        return 1 if self.policy is OpeningPolicy.IMMEDIATE else 2


@dataclass(frozen=True)
class Decision:
    """
    Verdict for one inbound request.

    ``rule_request`` is set only on the sighting that opens the pinhole.
    """

    action: Action
    key: Optional[PinholeKey]
    sighting: int
    rule_request: Optional[RuleUpdate] = None

    @property
    def passed(self) -> bool:
        return self.action is Action.PASS


class EngineStats(NamedTuple):
    """Counter snapshot."""
    records: int
    open: int
    greylisted: int
    installs_requested: int
    removals_requested: int


class RuleView(Protocol):
    """Read access to the firewall's effective rule set."""

    def is_effective(self, key: PinholeKey, now: float) -> bool:
        ...


class PinholeEngine:
    """
    Pinhole database plus the drop/pass decision.

    All mutations are expected from one serialized event stream.

    Args:
        config: Engine settings (default: EngineConfig()).
        rule_view: Firewall consulted before passing a request. Without
            one, a pinhole is effective as soon as it is opened.
    """

    def __init__(
        self,
        config: Optional[EngineConfig] = None,
        rule_view: Optional[RuleView] = None,
    ) -> None:
        self.config = config if config is not None else EngineConfig()
        self.rule_view = rule_view
        self._records: Dict[PinholeKey, PinholeRecord] = {}
        self._outbox: List[RuleUpdate] = []
        self._installs_requested = 0
        self._removals_requested = 0

    def __repr__(self) -> str:
        return (
            f"PinholeEngine(strategy={self.config.strategy.value}, "
            f"policy={self.config.policy.value}, records={len(self._records)})"
        )

    def derive_key(self, msg: SipMessage) -> PinholeKey:
        return derive_key(msg, self.config.strategy)

    def process_packet(self, msg: SipMessage, now: float) -> Decision:
        """
        Classify an inbound request.

        Args:
            msg: Parsed request destined for the protected proxy.
            now: Simulation time (s).

        Returns:
            Decision: Drop or pass, plus the install request on the
            sighting that opens the pinhole. Responses pass untouched and
            leave no state.
        """
        if not msg.is_request:
            return Decision(Action.PASS, None, 0)

        key = self.derive_key(msg)
        record = self._records.get(key)
        if record is None:
            record = PinholeRecord(
                key=key,
                sightings=1,
                state=RecordState.GREYLISTED,
                first_seen=now,
                last_hit=now,
            )
            self._records[key] = record
        else:
            record.sightings += 1
            record.last_hit = now

        if record.state is RecordState.GREYLISTED:
            if record.sightings >= self.config.sightings_to_open:
                return Decision(Action.DROP, key, record.sightings, self._open(record, now))
            return Decision(Action.DROP, key, record.sightings)

        if self.rule_view is None or self.rule_view.is_effective(key, now):
            return Decision(Action.PASS, key, record.sightings)
        return Decision(Action.DROP, key, record.sightings)

    def _open(self, record: PinholeRecord, now: float) -> RuleUpdate:
        record.state = RecordState.OPEN
        record.opened_at = now
        self._installs_requested += 1
        logger.debug(
            "opening pinhole %s after %d sighting(s)", key_digest(record.key), record.sightings
        )
        return RuleUpdate.install(record.key, now)

    def expire(self, now: float) -> List[PinholeKey]:
        """
        Close pinholes idle for longer than ``expiry_after_idle``.

        A record survives while ``now - last_hit <= expiry_after_idle``.
        Remove requests for expired open pinholes are queued for
        :meth:`drain_rule_requests`.

        Args:
            now: Simulation time (s).

        Returns:
            list[PinholeKey]: Keys of the removed records, oldest first.
        """
        limit = self.config.expiry_after_idle
        expired = [key for key, rec in self._records.items() if now - rec.last_hit > limit]
        for key in expired:
            record = self._records.pop(key)
            if record.state is RecordState.OPEN:
                self._outbox.append(RuleUpdate.remove(key, now))
                self._removals_requested += 1
        if expired:
            logger.debug("expired %d pinhole record(s) at t=%.3f", len(expired), now)
        return expired

    def drain_rule_requests(self) -> List[RuleUpdate]:
        """Return and clear the remove requests produced by :meth:`expire`."""
        pending, self._outbox = self._outbox, []
        return pending

    def lookup(self, key: PinholeKey) -> Optional[PinholeRecord]:
        """Copy of the record for key, or None."""
        record = self._records.get(key)
        return replace(record) if record is not None else None

    def records(self) -> Tuple[PinholeRecord, ...]:
        """Copies of all records in creation order."""
        return tuple(replace(rec) for rec in self._records.values())

    def stats(self) -> EngineStats:
        """
        Snapshot of the engine counters.

        Returns:
            EngineStats: records, open, greylisted, installs_requested,
            removals_requested.
        """
        open_count = sum(1 for rec in self._records.values() if rec.state is RecordState.OPEN)
        return EngineStats(
            records=len(self._records),
            open=open_count,
            greylisted=len(self._records) - open_count,
            installs_requested=self._installs_requested,
            removals_requested=self._removals_requested,
        )
