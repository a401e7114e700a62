"""
Traffic sources and the protected proxy.

Address plan:

    192.168.0.0/16  conforming user agents
    10.0.0.0/8      freshly spoofed attack sources, never repeated
    172.16.0.0/12   fixed spoofed source pools
    192.0.2.10      the protected proxy
"""

import heapq
import ipaddress
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, List, NamedTuple, Optional, Union

import numpy as np

from ..config import DEFAULT_PROXY_DELAYS, DEFAULT_TIMERS
from ..sip.message import Endpoint, Method, SipMessage

PROXY_ADDRESS = Endpoint("192.0.2.10", 5060)

_UA_NETWORK = ipaddress.IPv4Network("192.168.0.0/16")
_SPOOF_NETWORK = ipaddress.IPv4Network("10.0.0.0/8")
_POOL_NETWORK = ipaddress.IPv4Network("172.16.0.0/12")

EMERGENCY_URI = "urn:service:sos"
SERVICE_DOMAIN = "ims.example.net"

# UA ids end up in From tags, Call-IDs and Via branches
_UA_ID = re.compile(r"^[A-Za-z0-9.!%*_+`'~-]+$")


def _host(network: ipaddress.IPv4Network, index: int) -> str:
    # Skip the network address; stay clear of the broadcast address.
    if not 0 <= index < network.num_addresses - 2:
        raise ValueError(f"Address index {index} does not fit in {network}.")
    return str(network.network_address + 1 + index)


def ua_address(index: int) -> Endpoint:
    """Address of the index-th user agent."""
    return Endpoint(_host(_UA_NETWORK, index))


class SpoofAddressPool:
    """
    Source of never-repeating spoofed addresses.

    Addresses are handed out from a counter, so a run is reproducible and
    no two spoofed packets share a source.
    """

    def __init__(self) -> None:
        self._next = 0

    def __next__(self) -> Endpoint:
        address = Endpoint(_host(_SPOOF_NETWORK, self._next))
        self._next += 1
        return address

    def __iter__(self) -> "SpoofAddressPool":
        return self

    @property
    def issued(self) -> int:
        return self._next


def fixed_spoof_pool(pool_size: int, rng: np.random.Generator) -> List[Endpoint]:
    """
    Draw a fixed set of distinct spoofed addresses.

    Args:
        pool_size: Number of addresses.
        rng: Seeded generator.

    Returns:
        list[Endpoint]: Addresses in 172.16.0.0/12.
    """
    if pool_size < 1:
        raise ValueError(f"Pool size must be at least 1. Got: {pool_size}")
    indices = rng.choice(_POOL_NETWORK.num_addresses - 2, size=pool_size, replace=False)
    return [Endpoint(_host(_POOL_NETWORK, int(i))) for i in indices]


class UaBehavior(Enum):
    """What a conforming user agent does."""
    REGISTER = "register"
    CALL = "call"


@dataclass(frozen=True)
class UaModel:
    """
    Conforming user agent with SIP UDP retransmission.

    Attributes:
        id: Name used in Call-IDs and logs.
        address: UA address (default: assigned by the simulator).
        behavior: REGISTER transactions or INVITE calls.
        emergency: Emergency registrations/calls.
        emergency_ratio: Share of emergency transactions drawn per
            transaction; overrides ``emergency`` when set.
        transactions: Transactions to run, one after another.
        interval: Mean idle gap between transactions (s, exponential);
            0 starts the next transaction right away.
        start: Time of the first transaction (s).
        t1: Initial retransmission interval (s).
        t2: Retransmission cap for non-INVITE transactions (s).
        give_up_after: Transaction timeout (s).
        rng_seed: Seed mixed with the run seed.
    """

    id: str
    address: Optional[Endpoint] = None
    behavior: UaBehavior = UaBehavior.CALL
    emergency: bool = False
    emergency_ratio: Optional[float] = None
    transactions: int = 1
    interval: float = 1.0
    start: float = 0.0
    t1: float = DEFAULT_TIMERS.t1
    t2: float = DEFAULT_TIMERS.t2
    give_up_after: float = DEFAULT_TIMERS.give_up_after
    rng_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "behavior", UaBehavior(self.behavior))
        if not _UA_ID.match(self.id):
            raise ValueError(f"UA id must be a SIP token. Got: {self.id!r}")
        if isinstance(self.address, str):
            object.__setattr__(self, "address", Endpoint.parse(self.address))
        if self.t1 <= 0:
            raise ValueError(f"T1 must be positive. Got: {self.t1}")
        if self.t2 < self.t1:
            raise ValueError(f"T2 must be at least T1. Got: {self.t2}")
        if self.give_up_after < self.t1:
            raise ValueError(
                f"give_up_after must be at least T1. Got: {self.give_up_after}"
            )
        if self.transactions < 0:
            raise ValueError(f"Transactions must be non-negative. Got: {self.transactions}")
        if self.interval < 0:
            raise ValueError(f"Interval must be non-negative. Got: {self.interval}")
        if self.start < 0:
            raise ValueError(f"Start must be non-negative. Got: {self.start}")
        if self.emergency_ratio is not None and not 0 <= self.emergency_ratio <= 1:
            raise ValueError(
                f"Emergency ratio must be in [0, 1]. Got: {self.emergency_ratio}"
            )

    @property
    def method(self) -> str:
        return Method.REGISTER.value if self.behavior is UaBehavior.REGISTER else Method.INVITE.value

    def request_uri(self, emergency: bool, index: int) -> str:
        if self.behavior is UaBehavior.REGISTER:
            return f"sip:{SERVICE_DOMAIN};sos" if emergency else f"sip:{SERVICE_DOMAIN}"
        return EMERGENCY_URI if emergency else f"sip:callee{index}@{SERVICE_DOMAIN}"

    def retransmission_offsets(self) -> List[float]:
        """
        Send times of the retransmissions relative to the first send.

        Gaps double from T1; non-INVITE gaps are capped at T2. The
        transaction gives up at ``give_up_after``.

        Examples:
            >>> UaModel("ua").retransmission_offsets()
            [0.5, 1.5, 3.5, 7.5, 15.5, 31.5]
        """
        offsets = []
        gap = self.t1
        at = self.t1
        while at < self.give_up_after:
            offsets.append(at)
            gap *= 2
            if self.method != Method.INVITE.value:
                gap = min(gap, self.t2)
            at += gap
        return offsets


class AttackKind(Enum):
    """Attacker behaviour."""
    SPOOF_FLOOD = "spoof-flood"  # fresh spoofed source per message
    FIXED_SPOOF_SET = "fixed-spoof-set"  # sources drawn from a fixed pool
    CONFORMING_FLOOD = "conforming-flood"  # resends like a real UA


@dataclass(frozen=True)
class AttackerModel:
    """
    Flooding attacker.

    Attributes:
        kind: Attack variant.
        rate: Packets per second.
        total: Packets to send.
        pool_size: Fixed spoofed sources (fixed-spoof-set only).
        repeats: Resends of every distinct request (conforming-flood only).
        method: Request method of the flood.
        emergency: Flood carries the emergency service URI.
        start: Time of the first packet (s).
        t1: Gap between a request and its resends (s).
        rng_seed: Seed mixed with the run seed.
    """

    kind: AttackKind = AttackKind.SPOOF_FLOOD
    rate: float = 500.0
    total: int = 10000
    pool_size: int = 1
    repeats: int = 1
    method: str = Method.INVITE.value
    emergency: bool = False
    start: float = 0.0
    t1: float = DEFAULT_TIMERS.t1
    rng_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", AttackKind(self.kind))
        if self.rate <= 0:
            raise ValueError(f"Attack rate must be positive. Got: {self.rate}")
        if self.total <= 0:
            raise ValueError(f"Attack total must be positive. Got: {self.total}")
        if self.pool_size < 1:
            raise ValueError(f"Pool size must be at least 1. Got: {self.pool_size}")
        if self.repeats < 1:
            raise ValueError(f"Repeats must be at least 1. Got: {self.repeats}")
        if self.t1 <= 0:
            raise ValueError(f"T1 must be positive. Got: {self.t1}")
        if self.start < 0:
            raise ValueError(f"Start must be non-negative. Got: {self.start}")
        if Method.parse(self.method) not in (Method.INVITE, Method.REGISTER):
            raise ValueError(f"Attack method must be INVITE or REGISTER. Got: {self.method}")

    @property
    def copies(self) -> int:
        """Packets per distinct request."""
        return self.repeats + 1 if self.kind is AttackKind.CONFORMING_FLOOD else 1

    @property
    def distinct_requests(self) -> int:
        return -(-self.total // self.copies)

    def request_uri(self, index: int) -> str:
        if self.emergency:
            return EMERGENCY_URI
        if self.method == Method.REGISTER.value:
            return f"sip:{SERVICE_DOMAIN}"
        return f"sip:victim{index}@{SERVICE_DOMAIN}"


class Emission(NamedTuple):
    """One attack packet: send time, distinct request index, copy number."""
    time: float
    request: int
    copy: int


def emission_schedule(model: AttackerModel) -> Iterator[Emission]:
    """
    Attack packets in send order.

    Distinct requests leave at ``rate / copies`` per second; copy m of a
    request follows the original after ``m * t1``. The total packet count
    is ``total`` whatever the number of copies.

    Examples:
        >>> model = AttackerModel(rate=500.0, total=10000)
        >>> last = list(emission_schedule(model))[-1]
        >>> round(last.time, 3)
        19.998
    """
    distinct_rate = model.rate / model.copies

    def copy_stream(copy: int) -> Iterator[Emission]:
        for j in range(model.distinct_requests):
            yield Emission(model.start + j / distinct_rate + copy * model.t1, j, copy)

    streams = [copy_stream(copy) for copy in range(model.copies)]
    for emitted, emission in enumerate(heapq.merge(*streams)):
        if emitted >= model.total:
            return
        yield emission


@dataclass(frozen=True)
class ProxyModel:
    """
    Protected proxy with a fixed processing delay until the first reply.

    Attributes:
        delay_normal: Reply delay for ordinary requests (s).
        delay_emergency: Reply delay for emergency requests (s).
        address: Proxy address.
    """

    delay_normal: float = DEFAULT_PROXY_DELAYS.normal
    delay_emergency: float = DEFAULT_PROXY_DELAYS.emergency
    address: Endpoint = PROXY_ADDRESS

    def __post_init__(self) -> None:
        if isinstance(self.address, str):
            object.__setattr__(self, "address", Endpoint.parse(self.address))
        if self.delay_normal <= 0:
            raise ValueError(f"Normal proxy delay must be positive. Got: {self.delay_normal}")
        if self.delay_emergency < self.delay_normal:
            raise ValueError(
                f"Emergency proxy delay must be at least the normal delay. "
                f"Got: {self.delay_emergency}"
            )

    def delay(self, msg: Union[SipMessage, bool]) -> float:
        """Reply delay for a request (or an emergency flag)."""
        emergency = msg if isinstance(msg, bool) else msg.is_emergency
        return self.delay_emergency if emergency else self.delay_normal
