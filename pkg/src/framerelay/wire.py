"""Binary wire protocol: bit-exact encoding and incremental decoding.

One body grammar serves both transports. Raw TCP prepends a 4-byte
little-endian body length; a WebSocket binary message carries exactly one
body. All integers are little-endian; strings are a u16 byte-length prefix
followed by UTF-8 bytes. Encoding is canonical: re-encoding a decoded
message is byte-identical.
"""
from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

from .model import (
    Annotation,
    AnnotationKind,
    MAX_ANNOTATIONS,
    PixelFormat,
    Priority,
)

MAX_BODY_LEN = 16 * 1024 * 1024
MAX_STRING_BYTES = 65535
MAX_LIST_COUNT = 1024
MAX_COORDS = 4096
LENGTH_PREFIX = struct.Struct("<I")


class MessageType(enum.IntEnum):
    HELLO = 0x01
    HELLO_ACK = 0x02
    LIST_PROCESSORS = 0x03
    PROCESSOR_LIST = 0x04
    SET_PROCESSOR = 0x05
    SET_PROCESSOR_ACK = 0x06
    FRAME = 0x07
    RESULT = 0x08
    ERROR = 0x09
    PING = 0x0A
    PONG = 0x0B
    STATS_REQUEST = 0x0C
    STATS = 0x0D
    SESSION_LIST_REQUEST = 0x0E
    SESSION_LIST = 0x0F
    SUBSCRIBE = 0x10
    SUBSCRIBE_ACK = 0x11


class Role(enum.IntEnum):
    SOURCE = 0
    CONSOLE = 1


class ErrorCode(enum.IntEnum):
    MALFORMED = 1
    UNSUPPORTED_VERSION = 2
    FRAME_TOO_LARGE = 3
    UNKNOWN_PROCESSOR = 4
    INTERNAL = 5
    LIMIT = 6


class AckStatus(enum.IntEnum):
    OK = 0
    UNKNOWN_ID = 1
    BAD_OPTIONS = 2
    NO_SUCH_SESSION = 3
    NOT_PERMITTED = 4


@dataclass(frozen=True)
class Hello:
    version: int = 1
    role: int = Role.SOURCE
    name: str = ""


@dataclass(frozen=True)
class HelloAck:
    session_id: int
    server_version: int = 1


@dataclass(frozen=True)
class ListProcessors:
    pass


@dataclass(frozen=True)
class ProcessorEntry:
    id: str
    display_name: str
    flags: int  # bit0 = uses a remote network service


@dataclass(frozen=True)
class ProcessorList:
    entries: Tuple[ProcessorEntry, ...]


@dataclass(frozen=True)
class SetProcessor:
    target_session: int  # 0 = this connection's session
    id: str
    options: str = ""


@dataclass(frozen=True)
class SetProcessorAck:
    target_session: int
    id: str
    status: int


@dataclass(frozen=True)
class FrameMsg:
    seq: int
    capture_ts_us: int
    width: int
    height: int
    format: int
    payload: bytes


@dataclass(frozen=True)
class ResultDescription:
    priority: int
    text: str


@dataclass(frozen=True)
class ResultMsg:
    frame_seq: int
    processor_id: str
    recv_to_dispatch_us: int
    process_us: int
    annotations: Tuple[Annotation, ...]
    description: Optional[ResultDescription]


@dataclass(frozen=True)
class ErrorMsg:
    code: int
    message: str


@dataclass(frozen=True)
class Ping:
    token: bytes  # exactly 8 opaque bytes, echoed verbatim


@dataclass(frozen=True)
class Pong:
    token: bytes


@dataclass(frozen=True)
class StatsRequest:
    target_session: int = 0  # 0 = self


@dataclass(frozen=True)
class StatsMsg:
    session_id: int
    frames_received: int
    frames_processed: int
    frames_dropped: int
    descriptions_suppressed: int


@dataclass(frozen=True)
class SessionListRequest:
    pass


@dataclass(frozen=True)
class SessionEntry:
    session_id: int
    name: str
    current_processor: str


@dataclass(frozen=True)
class SessionList:
    entries: Tuple[SessionEntry, ...]


@dataclass(frozen=True)
class Subscribe:
    target_session: int


@dataclass(frozen=True)
class SubscribeAck:
    target_session: int
    status: int


WireMessage = Union[
    Hello, HelloAck, ListProcessors, ProcessorList, SetProcessor, SetProcessorAck,
    FrameMsg, ResultMsg, ErrorMsg, Ping, Pong, StatsRequest, StatsMsg,
    SessionListRequest, SessionList, Subscribe, SubscribeAck,
]

_TYPE_OF = {
    Hello: MessageType.HELLO,
    HelloAck: MessageType.HELLO_ACK,
    ListProcessors: MessageType.LIST_PROCESSORS,
    ProcessorList: MessageType.PROCESSOR_LIST,
    SetProcessor: MessageType.SET_PROCESSOR,
    SetProcessorAck: MessageType.SET_PROCESSOR_ACK,
    FrameMsg: MessageType.FRAME,
    ResultMsg: MessageType.RESULT,
    ErrorMsg: MessageType.ERROR,
    Ping: MessageType.PING,
    Pong: MessageType.PONG,
    StatsRequest: MessageType.STATS_REQUEST,
    StatsMsg: MessageType.STATS,
    SessionListRequest: MessageType.SESSION_LIST_REQUEST,
    SessionList: MessageType.SESSION_LIST,
    Subscribe: MessageType.SUBSCRIBE,
    SubscribeAck: MessageType.SUBSCRIBE_ACK,
}


class EncodeError(ValueError):
    """A field violates its invariant; no bytes were emitted."""


class MalformedMessage(ValueError):
    """The body cannot be decoded; terminal for the connection."""


@dataclass(frozen=True)
class Complete:
    message: WireMessage
    bytes_consumed: int


@dataclass(frozen=True)
class NeedMore:
    minimum_additional_bytes: int  # always >= 1


@dataclass(frozen=True)
class Malformed:
    reason: str


DecodeOutcome = Union[Complete, NeedMore, Malformed]


# ---------------------------------------------------------------------------
# Encoding

def _pack_str(out: bytearray, s: str) -> None:
    raw = s.encode("utf-8")
    if len(raw) > MAX_STRING_BYTES:
        raise EncodeError(f"string of {len(raw)} bytes exceeds u16 length prefix")
    out += struct.pack("<H", len(raw))
    out += raw


def _check_u(value: int, bits: int, what: str) -> int:
    if not 0 <= value < (1 << bits):
        raise EncodeError(f"{what}={value} does not fit u{bits}")
    return value


def encode_message(m: WireMessage) -> bytes:
    """Encode one message body (type byte + payload). No length prefix."""
    mtype = _TYPE_OF.get(type(m))
    if mtype is None:
        raise EncodeError(f"not a wire message: {type(m).__name__}")
    out = bytearray([mtype])
    if isinstance(m, Hello):
        out.append(_check_u(m.version, 8, "version"))
        out.append(_check_u(m.role, 8, "role"))
        _pack_str(out, m.name)
    elif isinstance(m, HelloAck):
        out += struct.pack("<IB", _check_u(m.session_id, 32, "session_id"),
                           _check_u(m.server_version, 8, "server_version"))
    elif isinstance(m, (ListProcessors, SessionListRequest)):
        pass
    elif isinstance(m, ProcessorList):
        if len(m.entries) > MAX_LIST_COUNT:
            raise EncodeError("too many processor entries")
        out += struct.pack("<H", len(m.entries))
        for e in m.entries:
            _pack_str(out, e.id)
            _pack_str(out, e.display_name)
            out.append(_check_u(e.flags, 8, "flags"))
    elif isinstance(m, SetProcessor):
        out += struct.pack("<I", _check_u(m.target_session, 32, "target_session"))
        _pack_str(out, m.id)
        _pack_str(out, m.options)
    elif isinstance(m, SetProcessorAck):
        out += struct.pack("<I", _check_u(m.target_session, 32, "target_session"))
        _pack_str(out, m.id)
        out.append(_check_u(m.status, 8, "status"))
    elif isinstance(m, FrameMsg):
        out += struct.pack(
            "<IQHHBBI",
            _check_u(m.seq, 32, "seq"),
            _check_u(m.capture_ts_us, 64, "capture_ts_us"),
            _check_u(m.width, 16, "width"),
            _check_u(m.height, 16, "height"),
            _check_u(m.format, 8, "format"),
            0,
            len(m.payload),
        )
        out += m.payload
    elif isinstance(m, ResultMsg):
        out += struct.pack("<I", _check_u(m.frame_seq, 32, "frame_seq"))
        _pack_str(out, m.processor_id)
        out += struct.pack("<II",
                           _check_u(m.recv_to_dispatch_us, 32, "recv_to_dispatch_us"),
                           _check_u(m.process_us, 32, "process_us"))
        if len(m.annotations) > MAX_ANNOTATIONS:
            raise EncodeError("too many annotations")
        out += struct.pack("<H", len(m.annotations))
        for a in m.annotations:
            out.append(int(a.kind))
            _pack_str(out, a.label)
            out += struct.pack("<HH", round(a.confidence * 10000), len(a.coords))
            for x, y in a.coords:
                out += struct.pack("<HH", round(x * 65535), round(y * 65535))
        if m.description is None:
            out.append(0)
        else:
            out.append(1)
            out.append(_check_u(m.description.priority, 8, "priority"))
            _pack_str(out, m.description.text)
    elif isinstance(m, ErrorMsg):
        out.append(_check_u(m.code, 8, "code"))
        _pack_str(out, m.message)
    elif isinstance(m, (Ping, Pong)):
        if len(m.token) != 8:
            raise EncodeError("ping/pong token must be exactly 8 bytes")
        out += m.token
    elif isinstance(m, StatsRequest):
        out += struct.pack("<I", _check_u(m.target_session, 32, "target_session"))
    elif isinstance(m, StatsMsg):
        out += struct.pack(
            "<IQQQQ",
            _check_u(m.session_id, 32, "session_id"),
            _check_u(m.frames_received, 64, "frames_received"),
            _check_u(m.frames_processed, 64, "frames_processed"),
            _check_u(m.frames_dropped, 64, "frames_dropped"),
            _check_u(m.descriptions_suppressed, 64, "descriptions_suppressed"),
        )
    elif isinstance(m, SessionList):
        if len(m.entries) > MAX_LIST_COUNT:
            raise EncodeError("too many session entries")
        out += struct.pack("<H", len(m.entries))
        for e in m.entries:
            out += struct.pack("<I", _check_u(e.session_id, 32, "session_id"))
            _pack_str(out, e.name)
            _pack_str(out, e.current_processor)
    elif isinstance(m, Subscribe):
        out += struct.pack("<I", _check_u(m.target_session, 32, "target_session"))
    elif isinstance(m, SubscribeAck):
        out += struct.pack("<IB", _check_u(m.target_session, 32, "target_session"),
                           _check_u(m.status, 8, "status"))
    if len(out) > MAX_BODY_LEN:
        raise EncodeError("body exceeds 16 MiB cap")
    return bytes(out)


def encode_framed(m: WireMessage) -> bytes:
    """Encode with the 4-byte length prefix used by the TCP transport."""
    body = encode_message(m)
    return LENGTH_PREFIX.pack(len(body)) + body


# ---------------------------------------------------------------------------
# Decoding

class _Reader:
    __slots__ = ("buf", "pos")

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise MalformedMessage("field overruns message body")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def string(self) -> str:
        n = self.u16()
        raw = self.take(n)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise MalformedMessage(f"invalid UTF-8 in string: {e}") from None

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise MalformedMessage(f"{len(self.buf) - self.pos} trailing bytes in body")


def decode_body(body: bytes) -> WireMessage:
    """Decode exactly one message body. Raises MalformedMessage."""
    if not body:
        raise MalformedMessage("empty body")
    if len(body) > MAX_BODY_LEN:
        raise MalformedMessage("body exceeds 16 MiB cap")
    try:
        mtype = MessageType(body[0])
    except ValueError:
        raise MalformedMessage(f"unknown type 0x{body[0]:02X}") from None
    r = _Reader(body)
    r.pos = 1
    msg = _DECODERS[mtype](r)
    r.done()
    return msg


def _dec_hello(r: _Reader) -> Hello:
    return Hello(version=r.u8(), role=r.u8(), name=r.string())


def _dec_hello_ack(r: _Reader) -> HelloAck:
    return HelloAck(session_id=r.u32(), server_version=r.u8())


def _dec_processor_list(r: _Reader) -> ProcessorList:
    count = r.u16()
    if count > MAX_LIST_COUNT:
        raise MalformedMessage(f"processor count {count} exceeds limit")
    entries = tuple(
        ProcessorEntry(id=r.string(), display_name=r.string(), flags=r.u8())
        for _ in range(count)
    )
    return ProcessorList(entries)


def _dec_set_processor(r: _Reader) -> SetProcessor:
    return SetProcessor(target_session=r.u32(), id=r.string(), options=r.string())


def _dec_set_processor_ack(r: _Reader) -> SetProcessorAck:
    return SetProcessorAck(target_session=r.u32(), id=r.string(), status=r.u8())


def _dec_frame(r: _Reader) -> FrameMsg:
    seq = r.u32()
    ts = r.u64()
    width = r.u16()
    height = r.u16()
    fmt = r.u8()
    reserved = r.u8()
    if reserved != 0:
        raise MalformedMessage("reserved byte must be 0")
    payload_len = r.u32()
    payload = r.take(payload_len)
    return FrameMsg(seq=seq, capture_ts_us=ts, width=width, height=height,
                    format=fmt, payload=payload)


def _dec_result(r: _Reader) -> ResultMsg:
    frame_seq = r.u32()
    processor_id = r.string()
    recv_to_dispatch_us = r.u32()
    process_us = r.u32()
    count = r.u16()
    if count > MAX_ANNOTATIONS:
        raise MalformedMessage(f"annotation count {count} exceeds 256")
    annotations = []
    for _ in range(count):
        kind_code = r.u8()
        try:
            kind = AnnotationKind(kind_code)
        except ValueError:
            raise MalformedMessage(f"unknown annotation kind {kind_code}") from None
        label = r.string()
        conf_q = r.u16()
        if conf_q > 10000:
            raise MalformedMessage(f"confidence {conf_q} exceeds scale")
        coord_count = r.u16()
        if coord_count > MAX_COORDS:
            raise MalformedMessage(f"coord count {coord_count} exceeds limit")
        coords = tuple(
            (r.u16() / 65535, r.u16() / 65535) for _ in range(coord_count)
        )
        try:
            annotations.append(Annotation(kind, label, conf_q / 10000, coords))
        except ValueError as e:
            raise MalformedMessage(str(e)) from None
    description = None
    if r.u8() == 1:
        priority = r.u8()
        text = r.string()
        description = ResultDescription(priority=priority, text=text)
    return ResultMsg(frame_seq=frame_seq, processor_id=processor_id,
                     recv_to_dispatch_us=recv_to_dispatch_us, process_us=process_us,
                     annotations=tuple(annotations), description=description)


def _dec_error(r: _Reader) -> ErrorMsg:
    return ErrorMsg(code=r.u8(), message=r.string())


def _dec_stats(r: _Reader) -> StatsMsg:
    return StatsMsg(session_id=r.u32(), frames_received=r.u64(),
                    frames_processed=r.u64(), frames_dropped=r.u64(),
                    descriptions_suppressed=r.u64())


def _dec_session_list(r: _Reader) -> SessionList:
    count = r.u16()
    if count > MAX_LIST_COUNT:
        raise MalformedMessage(f"session count {count} exceeds limit")
    entries = tuple(
        SessionEntry(session_id=r.u32(), name=r.string(), current_processor=r.string())
        for _ in range(count)
    )
    return SessionList(entries)


_DECODERS = {
    MessageType.HELLO: _dec_hello,
    MessageType.HELLO_ACK: _dec_hello_ack,
    MessageType.LIST_PROCESSORS: lambda r: ListProcessors(),
    MessageType.PROCESSOR_LIST: _dec_processor_list,
    MessageType.SET_PROCESSOR: _dec_set_processor,
    MessageType.SET_PROCESSOR_ACK: _dec_set_processor_ack,
    MessageType.FRAME: _dec_frame,
    MessageType.RESULT: _dec_result,
    MessageType.ERROR: _dec_error,
    MessageType.PING: lambda r: Ping(token=r.take(8)),
    MessageType.PONG: lambda r: Pong(token=r.take(8)),
    MessageType.STATS_REQUEST: lambda r: StatsRequest(target_session=r.u32()),
    MessageType.STATS: _dec_stats,
    MessageType.SESSION_LIST_REQUEST: lambda r: SessionListRequest(),
    MessageType.SESSION_LIST: _dec_session_list,
    MessageType.SUBSCRIBE: lambda r: Subscribe(target_session=r.u32()),
    MessageType.SUBSCRIBE_ACK: lambda r: SubscribeAck(target_session=r.u32(), status=r.u8()),
}


def decode_message(buf: bytes) -> DecodeOutcome:
    """Incrementally decode one length-prefixed message from a TCP stream.

    Trailing bytes beyond the first complete message are untouched.
    """
    if len(buf) < 4:
        return NeedMore(4 - len(buf))
    (body_len,) = LENGTH_PREFIX.unpack(buf[:4])
    if body_len == 0:
        return Malformed("zero-length body")
    if body_len > MAX_BODY_LEN:
        return Malformed(f"declared body length {body_len} exceeds 16 MiB cap")
    total = 4 + body_len
    if len(buf) < total:
        return NeedMore(total - len(buf))
    try:
        msg = decode_body(bytes(buf[4:total]))
    except MalformedMessage as e:
        return Malformed(str(e))
    return Complete(message=msg, bytes_consumed=total)
