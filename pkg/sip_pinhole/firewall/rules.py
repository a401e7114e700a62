"""
Rule updates exchanged between the pinhole engine and the firewall.
"""

from dataclasses import dataclass
from enum import Enum
from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from ..pinhole.keys import PinholeKey


class RuleOp(Enum):
    """Firewall rule operation."""
    INSTALL = "install"
    REMOVE = "remove"


@dataclass(frozen=True)
class RuleUpdate:
    """
    Request to install or remove the ALLOW rule for one pinhole.

    Attributes:
        op: Install or remove.
        key: Pinhole the rule matches.
        requested_at: Simulation time of the engine decision (s).
    """

    op: RuleOp
    key: "PinholeKey"
    requested_at: float

    @classmethod
    def install(cls, key: "PinholeKey", now: float) -> "RuleUpdate":
        return cls(RuleOp.INSTALL, key, now)

    @classmethod
    def remove(cls, key: "PinholeKey", now: float) -> "RuleUpdate":
        return cls(RuleOp.REMOVE, key, now)


@dataclass(frozen=True)
class RuleRecord:
    """
    A completed (or scheduled) rule operation.

    Attributes:
        op: Install or remove.
        key: Pinhole the rule matches.
        requested_at: When the engine asked for the rule (s).
        completed_at: When the rule change became effective (s).
        queue_wait: Time the operation waited for the busy firewall (s).
    """

    op: RuleOp
    key: "PinholeKey"
    requested_at: float
    completed_at: float
    queue_wait: float = 0.0

    @property
    def installed_at(self) -> float:
        return self.completed_at

    @property
    def lag(self) -> float:
        """Delay between request and effectiveness (s)."""
        return self.completed_at - self.requested_at
