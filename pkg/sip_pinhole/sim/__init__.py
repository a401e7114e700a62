"""
Discrete-event testbed: user agents, attackers, proxy and event log.
"""

from .events import EventKind, EventLog, LogRecord
from .agents import (
    PROXY_ADDRESS,
    AttackerModel,
    AttackKind,
    Emission,
    ProxyModel,
    SpoofAddressPool,
    UaBehavior,
    UaModel,
    emission_schedule,
    fixed_spoof_pool,
    ua_address,
)
from .simulator import Simulator, Transaction, run, run_seeds

__all__ = [
    "EventKind",
    "EventLog",
    "LogRecord",
    "PROXY_ADDRESS",
    "AttackerModel",
    "AttackKind",
    "Emission",
    "ProxyModel",
    "SpoofAddressPool",
    "UaBehavior",
    "UaModel",
    "emission_schedule",
    "fixed_spoof_pool",
    "ua_address",
    "Simulator",
    "Transaction",
    "run",
    "run_seeds",
]
