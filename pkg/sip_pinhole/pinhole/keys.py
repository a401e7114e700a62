"""
Pinhole match parameters.

A pinhole key is what an ALLOW rule at the perimeter firewall matches on.
Three strategies trade precision against rule count:

    source-ip    every request from one address shares a pinhole
    transaction  (source address, topmost Via branch, CSeq method)
    session      (Call-ID, From tag)
"""

import hashlib
from dataclasses import dataclass
from typing import Optional, Union

from ..config import KeyStrategy, get_key_strategy
from ..sip.message import SipMessage

# ACK and CANCEL travel inside the INVITE transaction.
_TRANSACTION_METHOD_ALIASES = {"ACK": "INVITE", "CANCEL": "INVITE"}

_FIELDS_BY_STRATEGY = {
    KeyStrategy.SOURCE_IP: ("ip",),
    KeyStrategy.TRANSACTION: ("ip", "branch", "cseq_method"),
    KeyStrategy.SESSION: ("call_id", "from_tag"),
}


@dataclass(frozen=True)
class PinholeKey:
    """
    Firewall pinhole match parameter.

    Exactly the fields demanded by ``strategy`` are set; the rest are None.
    Keys are hashable and compare equal iff every field is equal.
    """

    strategy: KeyStrategy
    ip: Optional[str] = None
    branch: Optional[str] = None
    cseq_method: Optional[str] = None
    call_id: Optional[str] = None
    from_tag: Optional[str] = None

    def __post_init__(self) -> None:
        wanted = _FIELDS_BY_STRATEGY[self.strategy]
        for name in ("ip", "branch", "cseq_method", "call_id", "from_tag"):
            value = getattr(self, name)
            if name in wanted and not value:
                raise ValueError(f"{self.strategy.value} key needs '{name}'.")
            if name not in wanted and value is not None:
                raise ValueError(f"{self.strategy.value} key must not set '{name}'.")

    def canonical(self) -> str:
        """Stable text form, e.g. 'transaction|10.0.0.5|z9hG4bK1|INVITE'."""
        parts = [getattr(self, name) for name in _FIELDS_BY_STRATEGY[self.strategy]]
        return "|".join([self.strategy.value, *parts])

    def __str__(self) -> str:
        return self.canonical()


def derive_key(msg: SipMessage, strategy: Union[KeyStrategy, str]) -> PinholeKey:
    """
    Derive the pinhole key of a request.

    Retransmissions carry identical key fields, so they map to the key of
    the original request. Under the transaction strategy ACK and CANCEL
    share their INVITE's key.

    Args:
        msg: Parsed request.
        strategy: Key strategy.

    Returns:
        PinholeKey: Key for the request.

    Raises:
        ValueError: If msg is a response.

    Examples:
        >>> from sip_pinhole.sip import Endpoint, build_request
        >>> msg = build_request("INVITE", "sip:bob@example.org", Endpoint("10.0.0.5"),
        ...                     Endpoint("192.0.2.10"), "c1", "z9hG4bK1", "t1")
        >>> derive_key(msg, "source-ip").ip
        '10.0.0.5'
    """
    if not msg.is_request:
        raise ValueError("Pinhole keys are derived from requests only.")
    strategy = get_key_strategy(strategy)
    if strategy is KeyStrategy.SOURCE_IP:
        return PinholeKey(strategy, ip=msg.src.ip)
    if strategy is KeyStrategy.TRANSACTION:
        method = _TRANSACTION_METHOD_ALIASES.get(msg.cseq_method, msg.cseq_method)
        return PinholeKey(strategy, ip=msg.src.ip, branch=msg.via_branch, cseq_method=method)
    return PinholeKey(strategy, call_id=msg.call_id, from_tag=msg.from_tag)


def key_digest(key: PinholeKey) -> str:
    """
    Short stable identifier of a key for logs and CSV files.

    Args:
        key: Pinhole key.

    Returns:
        str: First 12 hex digits of the SHA-1 of the canonical key text.
    """
    return hashlib.sha1(key.canonical().encode("utf-8")).hexdigest()[:12]
