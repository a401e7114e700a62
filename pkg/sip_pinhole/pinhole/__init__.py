"""
Pinhole keys and the greylisting engine.
"""

from .keys import PinholeKey, derive_key, key_digest
from .engine import (
    Action,
    Decision,
    EngineConfig,
    EngineStats,
    PinholeEngine,
    PinholeRecord,
    RecordState,
    RuleView,
)

__all__ = [
    "PinholeKey",
    "derive_key",
    "key_digest",
    "Action",
    "Decision",
    "EngineConfig",
    "EngineStats",
    "PinholeEngine",
    "PinholeRecord",
    "RecordState",
    "RuleView",
]
