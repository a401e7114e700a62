"""
Parse and render SIP-over-UDP datagrams.

Only the headers needed to derive pinhole keys and to drive the
simulated user agents are interpreted: Via, From, To, Call-ID, CSeq,
Contact, Max-Forwards and Content-Length. Everything else is skipped.
"""

import re
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence

from ..config import DEFAULT_EMERGENCY_MARKERS
from .message import Endpoint, MessageKind, Method, SipMessage, has_emergency_marker

# RFC 3261 compact header forms
_COMPACT_HEADERS = {
    "v": "via",
    "f": "from",
    "t": "to",
    "i": "call-id",
    "m": "contact",
    "l": "content-length",
}

_REQUIRED_HEADERS = (("call-id", "Call-ID"), ("via", "Via"), ("from", "From"), ("cseq", "CSeq"))

_REQUEST_LINE = re.compile(r"^([A-Za-z0-9!%*_+`'~.\-]+) (\S+) SIP/2\.0$")
_STATUS_LINE = re.compile(r"^SIP/2\.0 ([1-6][0-9]{2})(?: (.*))?$")
_BRANCH = re.compile(r";\s*branch=([^;,\s]+)", re.IGNORECASE)
_TAG = re.compile(r";\s*tag=([^;,\s>]+)", re.IGNORECASE)
_CSEQ = re.compile(r"^([0-9]+)\s+(\S+)$")
_BLANK_LINE = re.compile(rb"\r?\n\r?\n")
_LINE_BREAK = re.compile(r"\r?\n")

_REASONS = {
    100: "Trying",
    180: "Ringing",
    200: "OK",
    401: "Unauthorized",
    403: "Forbidden",
    404: "Not Found",
    408: "Request Timeout",
    486: "Busy Here",
    487: "Request Terminated",
    500: "Server Internal Error",
    503: "Service Unavailable",
}


class ParseFailure(Enum):
    """Failure classes reported by :func:`parse_datagram`."""
    NOT_SIP = "not-sip"
    MISSING_HEADER = "missing-header"
    MALFORMED_HEADER = "malformed-header"
    TRUNCATED = "truncated"


class SipParseError(ValueError):
    """
    A datagram that does not yield a SipMessage.

    Attributes:
        reason: Which failure class occurred.
        header: Canonical header name for header failures, else None.
    """

    def __init__(self, reason: ParseFailure, header: Optional[str] = None, detail: str = "") -> None:
        self.reason = reason
        self.header = header
        message = reason.value
        if header:
            message += f" ({header})"
        if detail:
            message += f": {detail}"
        super().__init__(message)


def detect_emergency(
    request_uri: str,
    markers: Iterable[str] = DEFAULT_EMERGENCY_MARKERS,
) -> bool:
    """
    Check a Request-URI for an emergency service marker.

    The match is a case-insensitive substring test against each marker.

    Args:
        request_uri: Request-URI of the request.
        markers: Emergency markers (default: urn:service:sos, sos@, ;sos).

    Returns:
        bool: True if any marker occurs in the URI.

    Raises:
        ValueError: If request_uri is empty.

    Examples:
        >>> detect_emergency("urn:service:sos")
        True
        >>> detect_emergency("sip:alice@example.org")
        False
    """
    if not request_uri:
        raise ValueError("Request URI must be non-empty.")
    return has_emergency_marker(request_uri, markers)


def _split_headers(lines: Sequence[str]) -> Dict[str, List[str]]:
    headers: Dict[str, List[str]] = {}
    last: Optional[str] = None
    for line in lines:
        if not line.strip():
            continue
        if line[:1] in (" ", "\t"):
            # folded continuation of the previous header
            if last is not None:
                headers[last][-1] += " " + line.strip()
            continue
        name, sep, value = line.partition(":")
        name = name.strip().lower()
        if not sep or not name:
            raise SipParseError(ParseFailure.MALFORMED_HEADER, line.strip()[:32] or "<empty>")
        name = _COMPACT_HEADERS.get(name, name)
        headers.setdefault(name, []).append(value.strip())
        last = name
    return headers


def _uri_of(value: str) -> str:
    if "<" in value:
        start = value.index("<") + 1
        end = value.find(">", start)
        return value[start:end if end >= 0 else None].strip()
    return value.split(";", 1)[0].strip()


def _header_params(value: str) -> str:
    # parameters inside <...> belong to the URI, not the header
    if "<" in value:
        end = value.find(">", value.index("<"))
        return value[end + 1:] if end >= 0 else ""
    return value


def parse_datagram(
    payload: bytes,
    src: Endpoint,
    dst: Endpoint,
    markers: Iterable[str] = DEFAULT_EMERGENCY_MARKERS,
) -> SipMessage:
    """
    Parse one UDP datagram payload into a SipMessage.

    Header names match case-insensitively and compact forms (i, v, f, t,
    m, l) are accepted. CRLF line endings are expected; lone LF is
    tolerated. Only the topmost Via is used.

    Args:
        payload: Complete UDP payload.
        src: Source transport address of the datagram.
        dst: Destination transport address of the datagram.
        markers: Emergency markers for Request-URI classification.

    Returns:
        SipMessage: The parsed message.

    Raises:
        SipParseError: NOT_SIP for a bad start line, MISSING_HEADER when
            Call-ID, Via, From or CSeq is absent, MALFORMED_HEADER when a
            required header cannot be interpreted or a value cannot be
            carried by a SipMessage, TRUNCATED when the
            payload is empty or shorter than its Content-Length.

    Examples:
        >>> payload = (b"INVITE sip:bob@example.org SIP/2.0\\r\\n"
        ...            b"Via: SIP/2.0/UDP 10.0.0.5:5060;branch=z9hG4bKabc\\r\\n"
        ...            b"From: <sip:alice@example.org>;tag=1\\r\\n"
        ...            b"Call-ID: c1\\r\\nCSeq: 1 INVITE\\r\\n\\r\\n")
        >>> msg = parse_datagram(payload, Endpoint("10.0.0.5"), Endpoint("192.0.2.10"))
        >>> msg.via_branch
        'z9hG4bKabc'
    """
    if not payload:
        raise SipParseError(ParseFailure.TRUNCATED, detail="empty payload")

    head_body = _BLANK_LINE.split(payload, maxsplit=1)
    body_length = len(head_body[1]) if len(head_body) > 1 else 0
    head = head_body[0].decode("utf-8", errors="replace")
    lines = _LINE_BREAK.split(head)
    start_line = lines[0].strip()

    request = _REQUEST_LINE.match(start_line)
    status = None if request else _STATUS_LINE.match(start_line)
    if not request and not status:
        raise SipParseError(ParseFailure.NOT_SIP, detail=start_line[:40])

    headers = _split_headers(lines[1:])
    for key, canonical in _REQUIRED_HEADERS:
        if not headers.get(key):
            raise SipParseError(ParseFailure.MISSING_HEADER, canonical)

    content_length = headers.get("content-length")
    if content_length:
        try:
            declared = int(content_length[0])
        except ValueError:
            raise SipParseError(ParseFailure.MALFORMED_HEADER, "Content-Length") from None
        if declared > body_length:
            raise SipParseError(ParseFailure.TRUNCATED, detail=f"body shorter than {declared} bytes")

    call_id = headers["call-id"][0]
    if not call_id:
        raise SipParseError(ParseFailure.MALFORMED_HEADER, "Call-ID")

    top_via = headers["via"][0].split(",", 1)[0]
    branch = _BRANCH.search(top_via)
    if not branch:
        raise SipParseError(ParseFailure.MALFORMED_HEADER, "Via", "no branch parameter")

    from_value = headers["from"][0]
    from_tag = _TAG.search(_header_params(from_value))
    if not from_tag:
        raise SipParseError(ParseFailure.MALFORMED_HEADER, "From", "no tag parameter")

    cseq = _CSEQ.match(headers["cseq"][0])
    if not cseq:
        raise SipParseError(ParseFailure.MALFORMED_HEADER, "CSeq", "expected '<number> <method>'")
    cseq_number, cseq_method = int(cseq.group(1)), cseq.group(2)

    to_uri = "sip:anonymous@anonymous.invalid"
    to_tag = None
    if headers.get("to"):
        to_value = headers["to"][0]
        to_uri = _uri_of(to_value)
        tag = _TAG.search(_header_params(to_value))
        to_tag = tag.group(1) if tag else None

    max_forwards = None
    if headers.get("max-forwards"):
        try:
            max_forwards = int(headers["max-forwards"][0])
        except ValueError:
            max_forwards = None

    contact = _uri_of(headers["contact"][0]) if headers.get("contact") else None

    common = dict(
        call_id=call_id,
        via_branch=branch.group(1),
        from_tag=from_tag.group(1),
        cseq_number=cseq_number,
        cseq_method=cseq_method,
        src=src,
        dst=dst,
        to_tag=to_tag,
        from_uri=_uri_of(from_value),
        to_uri=to_uri,
        contact=contact,
        max_forwards=max_forwards,
        emergency_markers=tuple(markers),
        length_bytes=len(payload),
    )

    try:
        if request:
            token, request_uri = request.group(1), request.group(2)
            if cseq_method != token:
                raise SipParseError(
                    ParseFailure.MALFORMED_HEADER, "CSeq", "method does not match request line"
                )
            return SipMessage(
                kind=MessageKind.REQUEST,
                method=Method.parse(token),
                method_token=token,
                request_uri=request_uri,
                **common,
            )
        return SipMessage(
            kind=MessageKind.RESPONSE,
            method=None,
            status_code=int(status.group(1)),
            reason=(status.group(2) or "").strip(),
            **common,
        )
    except SipParseError:
        raise
    except ValueError as e:
        raise SipParseError(ParseFailure.MALFORMED_HEADER, detail=str(e)) from e


def render_datagram(msg: SipMessage) -> bytes:
    """
    Render a SipMessage as a SIP/2.0 UDP payload.

    The Via sent-by is the sender for requests and the original requester
    (``dst``) for responses.

    Args:
        msg: Message to render.

    Returns:
        bytes: CRLF-delimited datagram with an empty body.

    Examples:
        >>> from sip_pinhole.sip.message import Endpoint
        >>> msg = build_request("REGISTER", "sip:example.org", Endpoint("192.168.0.2"),
        ...                     Endpoint("192.0.2.10"), "c1", "z9hG4bK1", "t1", cseq_number=2)
        >>> b"CSeq: 2 REGISTER" in render_datagram(msg)
        True
    """
    if msg.is_request:
        lines = [f"{msg.method_token} {msg.request_uri} SIP/2.0"]
        via_host = msg.src
    else:
        lines = [f"SIP/2.0 {msg.status_code} {msg.reason}".rstrip()]
        via_host = msg.dst
    lines.append(f"Via: SIP/2.0/UDP {via_host};branch={msg.via_branch}")
    if msg.max_forwards is not None:
        lines.append(f"Max-Forwards: {msg.max_forwards}")
    lines.append(f"From: <{msg.from_uri}>;tag={msg.from_tag}")
    to_line = f"To: <{msg.to_uri}>"
    if msg.to_tag:
        to_line += f";tag={msg.to_tag}"
    lines.append(to_line)
    lines.append(f"Call-ID: {msg.call_id}")
    lines.append(f"CSeq: {msg.cseq_number} {msg.cseq_method}")
    if msg.contact:
        lines.append(f"Contact: <{msg.contact}>")
    lines.append("Content-Length: 0")
    return ("\r\n".join(lines) + "\r\n\r\n").encode("utf-8")


def build_request(
    method: str,
    request_uri: str,
    src: Endpoint,
    dst: Endpoint,
    call_id: str,
    branch: str,
    from_tag: str,
    cseq_number: int = 1,
    from_uri: Optional[str] = None,
    to_uri: Optional[str] = None,
    markers: Iterable[str] = DEFAULT_EMERGENCY_MARKERS,
) -> SipMessage:
    """
    Build an outgoing request with the emergency flag derived from its URI.

    Args:
        method: Method token, e.g. 'INVITE'.
        request_uri: Request-URI.
        src: Sending UA address.
        dst: Proxy address.
        call_id: Call-ID value.
        branch: Via branch (should start with z9hG4bK).
        from_tag: From tag.
        cseq_number: CSeq sequence number.
        from_uri: From URI (default derived from src).
        to_uri: To URI (default: the request URI).
        markers: Emergency markers.

    Returns:
        SipMessage: A request ready for :func:`render_datagram`.
    """
    return SipMessage(
        kind=MessageKind.REQUEST,
        method=Method.parse(method),
        method_token=method,
        request_uri=request_uri,
        call_id=call_id,
        via_branch=branch,
        from_tag=from_tag,
        cseq_number=cseq_number,
        cseq_method=method,
        src=src,
        dst=dst,
        emergency_markers=tuple(markers),
        from_uri=from_uri or f"sip:user@{src.ip}",
        to_uri=to_uri or request_uri,
        contact=f"sip:user@{src}",
        max_forwards=70,
    )


def build_response(
    request: SipMessage,
    status_code: int,
    reason: Optional[str] = None,
    to_tag: Optional[str] = None,
) -> SipMessage:
    """
    Build the response to a request, mirroring its transaction headers.

    Args:
        request: The request being answered.
        status_code: Status code (100-699).
        reason: Reason phrase (default from the status code).
        to_tag: To tag added by the responder, if any.

    Returns:
        SipMessage: Response travelling from request.dst to request.src.
    """
    return SipMessage(
        kind=MessageKind.RESPONSE,
        method=None,
        status_code=status_code,
        reason=reason if reason is not None else _REASONS.get(status_code, "Unknown"),
        call_id=request.call_id,
        via_branch=request.via_branch,
        from_tag=request.from_tag,
        to_tag=to_tag if to_tag is not None else request.to_tag,
        cseq_number=request.cseq_number,
        cseq_method=request.cseq_method,
        src=request.dst,
        dst=request.src,
        from_uri=request.from_uri,
        to_uri=request.to_uri,
        emergency_markers=request.emergency_markers,
    )
