"""
SIP message model for the UDP subset the pinholing defense inspects.
"""

import ipaddress
import re
from dataclasses import dataclass, fields, replace
from enum import Enum
from typing import Iterable, Optional, Tuple

from ..config import DEFAULT_EMERGENCY_MARKERS


class MessageKind(Enum):
    """Request or response."""
    REQUEST = "request"
    RESPONSE = "response"


class Method(Enum):
    """Request methods the defense distinguishes; anything else is OTHER."""
    REGISTER = "REGISTER"
    INVITE = "INVITE"
    ACK = "ACK"
    BYE = "BYE"
    CANCEL = "CANCEL"
    OTHER = "OTHER"

    @classmethod
    def parse(cls, token: str) -> "Method":
        """
        Map a method token to a Method.

        Method names are case-sensitive in SIP, so 'invite' is OTHER.

        Args:
            token: Method token from a request line or CSeq header.

        Returns:
            Method: The matching member, or Method.OTHER.
        """
        try:
            return cls(token)
        except ValueError:
            return cls.OTHER


@dataclass(frozen=True)
class Endpoint:
    """
    UDP transport address.

    Attributes:
        ip: Dotted-quad IPv4 address.
        port: UDP port, 1-65535.
    """

    ip: str
    port: int = 5060

    def __post_init__(self) -> None:
        try:
            ipaddress.IPv4Address(self.ip)
        except ValueError:
            raise ValueError(f"Endpoint ip must be an IPv4 address. Got: {self.ip!r}")
        if not 0 < self.port < 65536:
            raise ValueError(f"Endpoint port must be in 1-65535. Got: {self.port}")

    def __str__(self) -> str:
        return f"{self.ip}:{self.port}"

    @classmethod
    def parse(cls, text: str) -> "Endpoint":
        """
        Parse 'ip' or 'ip:port' (port defaults to 5060).

        Raises:
            ValueError: If the address or port is invalid.
        """
        host, sep, port = text.strip().partition(":")
        if not sep:
            return cls(host)
        try:
            return cls(host, int(port))
        except ValueError as e:
            raise ValueError(f"Invalid endpoint '{text}': {e}") from None


# What the renderer can reproduce: header parameters end at ';', ',' or
# whitespace, tags also at '>', and URIs sit inside angle brackets.
_TOKEN = re.compile(r"^[A-Za-z0-9.!%*_+`'~\-]+$")
_BRANCH_VALUE = re.compile(r"^[^;,\s]+$")
_TAG_VALUE = re.compile(r"^[^;,\s>]+$")
_URI_VALUE = re.compile(r"^[^\s>]*$")


def _has_line_break(text: str) -> bool:
    return "\n" in text or "\r" in text


def has_emergency_marker(uri: str, markers: Iterable[str]) -> bool:
    """True if any marker occurs in the URI, ignoring case."""
    uri = uri.lower()
    return any(marker.lower() in uri for marker in markers)


@dataclass(frozen=True)
class SipMessage:
    """
    Parsed SIP datagram.

    Requests carry ``method``/``request_uri``; responses carry
    ``status_code``/``reason``. ``length_bytes`` is the datagram size and is
    the only field not reproduced by a render/parse round trip.

    ``is_emergency`` follows from the Request-URI and ``emergency_markers``;
    it is derived when omitted and a contradicting value is rejected.
    Responses are never emergencies. An empty ``to_tag`` or ``contact``
    means absent and is stored as None.
    """

    kind: MessageKind
    method: Optional[Method]
    call_id: str
    via_branch: str
    from_tag: str
    cseq_number: int
    cseq_method: str
    src: Endpoint
    dst: Endpoint
    method_token: str = ""
    status_code: Optional[int] = None
    reason: str = ""
    request_uri: str = ""
    to_tag: Optional[str] = None
    is_emergency: Optional[bool] = None
    emergency_markers: Tuple[str, ...] = DEFAULT_EMERGENCY_MARKERS
    from_uri: str = "sip:anonymous@anonymous.invalid"
    to_uri: str = "sip:anonymous@anonymous.invalid"
    contact: Optional[str] = None
    max_forwards: Optional[int] = None
    length_bytes: int = 0

    def __post_init__(self) -> None:
        if self.kind is MessageKind.REQUEST:
            if self.method is None:
                raise ValueError("Requests must have a method.")
            if self.status_code is not None:
                raise ValueError("Requests must not have a status code.")
            if not self.request_uri or any(c.isspace() for c in self.request_uri):
                raise ValueError(
                    f"Requests need a request URI without whitespace. Got: {self.request_uri!r}"
                )
            if not self.method_token:
                object.__setattr__(self, "method_token", self.method.value)
            token_ok = bool(_TOKEN.match(self.method_token))
            if not token_ok or Method.parse(self.method_token) is not self.method:
                raise ValueError(
                    f"Method token must be a token naming {self.method}. Got: {self.method_token!r}"
                )
            if self.cseq_method != self.method_token:
                raise ValueError(
                    f"CSeq method must equal the request method. "
                    f"Got: {self.cseq_method!r} != {self.method_token!r}"
                )
        else:
            if self.status_code is None or not 100 <= self.status_code <= 699:
                raise ValueError(
                    f"Responses need a status code in 100-699. Got: {self.status_code}"
                )
            if self.request_uri:
                raise ValueError("Responses must not have a request URI.")
            if self.reason != self.reason.strip() or _has_line_break(self.reason):
                raise ValueError(f"Reason must be a single trimmed line. Got: {self.reason!r}")
        self._check_fields()
        object.__setattr__(self, "emergency_markers", tuple(self.emergency_markers))
        emergency = self.is_request and has_emergency_marker(self.request_uri, self.emergency_markers)
        if self.is_emergency is not None and bool(self.is_emergency) != emergency:
            raise ValueError(
                f"is_emergency={self.is_emergency} contradicts request URI {self.request_uri!r}"
            )
        object.__setattr__(self, "is_emergency", emergency)

    def _check_fields(self) -> None:
        if self.to_tag == "":
            object.__setattr__(self, "to_tag", None)
        if self.contact == "":
            object.__setattr__(self, "contact", None)
        if not _BRANCH_VALUE.match(self.via_branch):
            raise ValueError(
                f"Via branch must not contain ';', ',' or whitespace. Got: {self.via_branch!r}"
            )
        for name in ("from_tag", "to_tag"):
            value = getattr(self, name)
            if value is not None and not _TAG_VALUE.match(value):
                raise ValueError(
                    f"{name} must not contain ';', ',', '>' or whitespace. Got: {value!r}"
                )
        if not self.call_id or self.call_id != self.call_id.strip() or _has_line_break(self.call_id):
            raise ValueError(f"call_id must be a non-empty trimmed line. Got: {self.call_id!r}")
        if not self.cseq_method or any(c.isspace() for c in self.cseq_method):
            raise ValueError(f"cseq_method must be a non-empty word. Got: {self.cseq_method!r}")
        for name in ("from_uri", "to_uri", "contact"):
            value = getattr(self, name)
            if value is not None and not _URI_VALUE.match(value):
                raise ValueError(f"{name} must not contain '>' or whitespace. Got: {value!r}")
        if self.cseq_number < 0:
            raise ValueError(f"CSeq number must be non-negative. Got: {self.cseq_number}")

    @property
    def is_request(self) -> bool:
        return self.kind is MessageKind.REQUEST

    def semantic_fields(self) -> Tuple:
        """All fields except the datagram length, for round-trip comparison."""
        return tuple(
            getattr(self, f.name) for f in fields(self) if f.name != "length_bytes"
        )

    def with_length(self, length_bytes: int) -> "SipMessage":
        return replace(self, length_bytes=length_bytes)
