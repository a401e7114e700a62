"""
Configuration defaults for the pinholing defense and its testbed.

Provides the strategy/policy enumerations and the timer, proxy and
firewall defaults shared by every module.
"""

from enum import Enum
from typing import NamedTuple, Tuple, Type, TypeVar, Union


class KeyStrategy(Enum):
    """Which request fields identify a pinhole."""
    SOURCE_IP = "source-ip"
    TRANSACTION = "transaction"
    SESSION = "session"


class OpeningPolicy(Enum):
    """When a greylisted key gets its pinhole."""
    IMMEDIATE = "immediate"  # after the first sighting
    DEFERRED = "deferred"  # after the first retransmission


class ControllerKind(Enum):
    """How the firewall controller pushes rule updates."""
    REALTIME = "realtime"
    BATCHED = "batched"


class SipTimers(NamedTuple):
    """UDP transaction timers (seconds)."""
    t1: float  # initial retransmission interval
    t2: float  # retransmission cap for non-INVITE transactions
    give_up_after: float  # 64 * T1


class ProxyDelays(NamedTuple):
    """Proxy processing delay until the first reply (seconds)."""
    normal: float
    emergency: float


DEFAULT_TIMERS = SipTimers(t1=0.5, t2=4.0, give_up_after=32.0)
DEFAULT_PROXY_DELAYS = ProxyDelays(normal=0.14, emergency=0.21)

DEFAULT_EMERGENCY_MARKERS: Tuple[str, ...] = ("urn:service:sos", "sos@", ";sos")

# Register refresh time; pinholes must outlive it.
DEFAULT_EXPIRY_AFTER_IDLE = 3600.0
DEFAULT_SWEEP_INTERVAL = 60.0
DEFAULT_BATCH_INTERVAL = 1.0
DEFAULT_CAPACITY_WINDOW = 1000

OUTPUT_DIR_ENV = "SIP_PINHOLE_OUTPUT_DIR"

_E = TypeVar("_E", bound=Enum)


def _coerce(value: Union[Enum, str], enum_cls: Type[_E], label: str) -> _E:
    if isinstance(value, enum_cls):
        return value
    try:
        return enum_cls(value)
    except ValueError:
        choices = ", ".join(f"'{member.value}'" for member in enum_cls)
        raise ValueError(
            f"Invalid {label}: '{value}'. Use one of {choices}."
        ) from None


def get_key_strategy(strategy: Union[KeyStrategy, str]) -> KeyStrategy:
    """
    Resolve a key strategy from its enum member or string value.

    Args:
        strategy: KeyStrategy member or one of 'source-ip', 'transaction',
            'session'.

    Returns:
        KeyStrategy: The resolved strategy.

    Raises:
        ValueError: If the value names no strategy.

    Examples:
        >>> get_key_strategy("transaction")
        <KeyStrategy.TRANSACTION: 'transaction'>
    """
    return _coerce(strategy, KeyStrategy, "key strategy")


def get_opening_policy(policy: Union[OpeningPolicy, str]) -> OpeningPolicy:
    """
    Resolve an opening policy from its enum member or string value.

    Raises:
        ValueError: If the value names no policy.
    """
    return _coerce(policy, OpeningPolicy, "opening policy")


def get_controller_kind(kind: Union[ControllerKind, str]) -> ControllerKind:
    """
    Resolve a controller kind from its enum member or string value.

    Raises:
        ValueError: If the value names no controller kind.
    """
    return _coerce(kind, ControllerKind, "controller kind")
