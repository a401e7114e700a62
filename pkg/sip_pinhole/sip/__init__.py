"""
Minimal SIP-over-UDP message handling.
"""

from .message import Endpoint, MessageKind, Method, SipMessage
from .parser import (
    ParseFailure,
    SipParseError,
    build_request,
    build_response,
    detect_emergency,
    parse_datagram,
    render_datagram,
)

__all__ = [
    "Endpoint",
    "MessageKind",
    "Method",
    "SipMessage",
    "ParseFailure",
    "SipParseError",
    "build_request",
    "build_response",
    "detect_emergency",
    "parse_datagram",
    "render_datagram",
]
