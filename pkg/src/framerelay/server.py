"""Relay server: accepts source and console connections over raw TCP and
WebSocket, manages isolated per-connection sessions, routes frames through
the processor framework, deduplicates speech text, mirrors results to
subscribed consoles, and reports stats.
"""
from __future__ import annotations

import argparse
import itertools
import logging
import os
import socket
import threading
import time
from dataclasses import dataclass, field
from typing import Dict, Optional, Set

from websockets.sync.server import serve as ws_serve

from . import wire
from .framework import (
    BadOptions,
    DispatchSession,
    ProcessorOptions,
    ProcessorRegistry,
    UnknownProcessor,
)
from .model import Frame, MAX_DIMENSION, PixelFormat, Priority, ProcessResult, frame_violation
from .processors import VlmConfig, build_registry

log = logging.getLogger("framerelay.server")

SERVER_VERSION = 1


@dataclass
class ServerConfig:
    tcp_listen: str = "127.0.0.1:7001"
    ws_listen: str = "127.0.0.1:7002"
    vlm_endpoint: str = "http://127.0.0.1:7010"
    vlm_model: str = "mock-model"
    vlm_timeout_ms: int = 10000
    vlm_token: Optional[str] = None
    default_processor: str = "scene_change"
    dedup_ms: int = 5000


class DedupPolicy:
    """Suppresses repeats of the same ROUTINE text inside a time window.
    INTERRUPT always passes."""

    def __init__(self, window_ms: int = 5000):
        self.window_ms = window_ms
        self.last_text: Optional[str] = None
        self.last_emit_ts: float = 0.0

    def filter(self, text: str, priority: Priority, now_ms: float) -> bool:
        """True = pass, False = suppress. Updates state on pass."""
        if (priority == Priority.ROUTINE and text == self.last_text
                and now_ms - self.last_emit_ts < self.window_ms):
            return False
        self.last_text = text
        self.last_emit_ts = now_ms
        return True


class Transport:
    """One connected peer: framing-appropriate sends plus lifecycle."""

    def send_body(self, body: bytes) -> None:
        raise NotImplementedError

    def close(self) -> None:
        raise NotImplementedError


class TcpTransport(Transport):
    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._lock = threading.Lock()

    def send_body(self, body: bytes) -> None:
        with self._lock:
            self._sock.sendall(wire.LENGTH_PREFIX.pack(len(body)) + body)

    def close(self) -> None:
        try:
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()


class WsTransport(Transport):
    def __init__(self, ws):
        self._ws = ws
        self._lock = threading.Lock()

    def send_body(self, body: bytes) -> None:
        with self._lock:
            self._ws.send(body)

    def close(self) -> None:
        try:
            self._ws.close()
        except Exception:
            pass


class SessionState:
    def __init__(self, session_id: int, name: str, role: int, transport: Transport,
                 dispatch: Optional[DispatchSession], dedup: Optional[DedupPolicy]):
        self.session_id = session_id
        self.name = name
        self.role = role
        self.transport = transport
        self.dispatch = dispatch  # None for console sessions (no mailbox)
        self.dedup = dedup
        self.subscribers: Set[int] = set()
        self.counters_lock = threading.Lock()
        self.frames_received = 0
        self.frames_processed = 0
        self.frames_dropped = 0
        self.descriptions_suppressed = 0
        self.closing = threading.Event()

    def stats_msg(self) -> wire.StatsMsg:
        with self.counters_lock:
            return wire.StatsMsg(
                session_id=self.session_id,
                frames_received=self.frames_received,
                frames_processed=self.frames_processed,
                frames_dropped=self.frames_dropped,
                descriptions_suppressed=self.descriptions_suppressed,
            )


class RelayServer:
    def __init__(self, config: ServerConfig, registry: Optional[ProcessorRegistry] = None):
        self.config = config
        if registry is None:
            registry = build_registry(VlmConfig(
                endpoint=config.vlm_endpoint,
                model=config.vlm_model,
                timeout_ms=config.vlm_timeout_ms,
                token=config.vlm_token,
            ))
        self.registry = registry
        self.registry.descriptor(config.default_processor)  # raises if unknown
        self.registry.freeze()
        self._sessions: Dict[int, SessionState] = {}
        self._sessions_lock = threading.Lock()
        self._next_session_id = itertools.count(1)
        self._stop = threading.Event()
        self._tcp_sock: Optional[socket.socket] = None
        self._ws_server = None
        self._threads = []
        self.tcp_port: Optional[int] = None
        self.ws_port: Optional[int] = None

    # -- lifecycle ----------------------------------------------------------

    def start(self) -> None:
        tcp_host, tcp_port = _parse_hostport(self.config.tcp_listen)
        ws_host, ws_port = _parse_hostport(self.config.ws_listen)
        self._tcp_sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._tcp_sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._tcp_sock.bind((tcp_host, tcp_port))
        self._tcp_sock.listen(64)
        self.tcp_port = self._tcp_sock.getsockname()[1]
        self._ws_server = ws_serve(self._handle_ws, ws_host, ws_port)
        self.ws_port = self._ws_server.socket.getsockname()[1]
        accept_thread = threading.Thread(target=self._accept_loop,
                                         name="tcp-accept", daemon=True)
        def ws_serve_loop():
            try:
                self._ws_server.serve_forever()
            except OSError:
                # socket already closed by stop(); benign shutdown race
                if not self._stop.is_set():
                    raise

        ws_thread = threading.Thread(target=ws_serve_loop,
                                     name="ws-serve", daemon=True)
        accept_thread.start()
        ws_thread.start()
        self._threads += [accept_thread, ws_thread]
        log.info("listening on tcp %s:%s ws %s:%s",
                 tcp_host, self.tcp_port, ws_host, self.ws_port)

    def stop(self) -> None:
        self._stop.set()
        if self._tcp_sock:
            self._tcp_sock.close()
        if self._ws_server:
            self._ws_server.shutdown()
        with self._sessions_lock:
            sessions = list(self._sessions.values())
        for s in sessions:
            s.closing.set()
            if s.dispatch:
                s.dispatch.mailbox.wake()
            s.transport.close()

    def run_forever(self) -> None:
        try:
            while not self._stop.wait(0.5):
                pass
        except KeyboardInterrupt:
            self.stop()

    # -- connection handling -------------------------------------------------

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                sock, addr = self._tcp_sock.accept()
            except OSError:
                return
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            threading.Thread(target=self._handle_tcp, args=(sock,),
                             name=f"tcp-{addr[1]}", daemon=True).start()

    def _handle_tcp(self, sock: socket.socket) -> None:
        transport = TcpTransport(sock)
        session = None
        buf = bytearray()
        try:
            while not self._stop.is_set():
                outcome = wire.decode_message(bytes(buf))
                if isinstance(outcome, wire.Complete):
                    del buf[:outcome.bytes_consumed]
                    session = self._on_message(transport, session, outcome.message)
                    if session is _CLOSE:
                        return
                    continue
                if isinstance(outcome, wire.Malformed):
                    self._send_error(transport, wire.ErrorCode.MALFORMED, outcome.reason)
                    return
                chunk = sock.recv(65536)
                if not chunk:
                    return
                buf += chunk
        except OSError:
            pass
        finally:
            transport.close()
            if session is not None and session is not _CLOSE:
                self._remove_session(session)

    def _handle_ws(self, ws) -> None:
        transport = WsTransport(ws)
        session = None
        try:
            for raw in ws:
                if isinstance(raw, str):
                    self._send_error(transport, wire.ErrorCode.MALFORMED,
                                     "text frames not allowed")
                    return
                try:
                    msg = wire.decode_body(raw)
                except wire.MalformedMessage as e:
                    self._send_error(transport, wire.ErrorCode.MALFORMED, str(e))
                    return
                session = self._on_message(transport, session, msg)
                if session is _CLOSE:
                    return
        except Exception:
            pass
        finally:
            transport.close()
            if session is not None and session is not _CLOSE:
                self._remove_session(session)

    # -- session management ---------------------------------------------------

    def _accept_session(self, transport: Transport, hello: wire.Hello) -> Optional[SessionState]:
        if hello.version != 1:
            self._send_error(transport, wire.ErrorCode.UNSUPPORTED_VERSION,
                             f"unsupported protocol version {hello.version}")
            return None
        session_id = next(self._next_session_id)
        if hello.role == wire.Role.SOURCE:
            dispatch = DispatchSession(self.registry, self.config.default_processor)
            session = SessionState(session_id, hello.name, hello.role, transport,
                                   dispatch, DedupPolicy(self.config.dedup_ms))
            dispatch.on_error = lambda pid: self._send_safe(
                transport, wire.ErrorMsg(wire.ErrorCode.INTERNAL,
                                         f"processor error: {pid}"))
            worker = threading.Thread(target=self._dispatch_loop, args=(session,),
                                      name=f"dispatch-{session_id}", daemon=True)
        else:
            session = SessionState(session_id, hello.name, hello.role, transport,
                                   None, None)
            worker = None
        with self._sessions_lock:
            self._sessions[session_id] = session
        self._send_safe(transport, wire.HelloAck(session_id=session_id,
                                                 server_version=SERVER_VERSION))
        if worker:
            worker.start()
        log.info("session %d (%s, role=%d) opened", session_id, hello.name, hello.role)
        return session

    def _remove_session(self, session: SessionState) -> None:
        session.closing.set()
        if session.dispatch:
            session.dispatch.mailbox.wake()
        with self._sessions_lock:
            self._sessions.pop(session.session_id, None)
            for other in self._sessions.values():
                other.subscribers.discard(session.session_id)
        log.info("session %d closed", session.session_id)

    def _get_session(self, session_id: int) -> Optional[SessionState]:
        with self._sessions_lock:
            return self._sessions.get(session_id)

    # -- dispatch / results ----------------------------------------------------

    def _dispatch_loop(self, session: SessionState) -> None:
        while not session.closing.is_set() and not self._stop.is_set():
            result = session.dispatch.dispatch_once(timeout=0.2)
            if result is not None:
                self._emit_result(session, result)

    def _emit_result(self, session: SessionState, result: ProcessResult) -> None:
        description = None
        if result.description is not None:
            now_ms = time.monotonic() * 1000
            if session.dedup.filter(result.description.text,
                                    result.description.priority, now_ms):
                description = wire.ResultDescription(
                    priority=int(result.description.priority),
                    text=result.description.text)
            else:
                with session.counters_lock:
                    session.descriptions_suppressed += 1
        msg = wire.ResultMsg(
            frame_seq=result.frame_seq,
            processor_id=result.processor,
            recv_to_dispatch_us=result.timing.recv_to_dispatch_us,
            process_us=result.timing.process_us,
            annotations=result.annotations,
            description=description,
        )
        body = wire.encode_message(msg)
        with session.counters_lock:
            session.frames_processed += 1
        self._send_body_safe(session, body)
        for sub_id in list(session.subscribers):
            sub = self._get_session(sub_id)
            if sub is None:
                session.subscribers.discard(sub_id)
                continue
            try:
                sub.transport.send_body(body)
            except Exception:
                session.subscribers.discard(sub_id)

    # -- message dispatch --------------------------------------------------------

    def _on_message(self, transport: Transport, session: Optional[SessionState],
                    msg: wire.WireMessage):
        if session is None:
            if isinstance(msg, wire.Hello):
                accepted = self._accept_session(transport, msg)
                return accepted if accepted is not None else _CLOSE
            self._send_error(transport, wire.ErrorCode.MALFORMED,
                             "first message must be HELLO")
            return _CLOSE

        if isinstance(msg, wire.FrameMsg):
            self._route_frame(session, msg)
        elif isinstance(msg, wire.ListProcessors):
            entries = tuple(
                wire.ProcessorEntry(d.id, d.display_name, 1 if d.remote else 0)
                for d in self.registry.list_processors())
            self._send_safe(transport, wire.ProcessorList(entries))
        elif isinstance(msg, wire.SetProcessor):
            self._set_processor(session, msg)
        elif isinstance(msg, wire.Ping):
            self._send_safe(transport, wire.Pong(token=msg.token))
        elif isinstance(msg, wire.StatsRequest):
            target = self._resolve(session, msg.target_session)
            if target is None:
                self._send_safe(transport, wire.ErrorMsg(
                    wire.ErrorCode.MALFORMED, "no such session"))
            else:
                self._send_safe(transport, target.stats_msg())
        elif isinstance(msg, wire.SessionListRequest):
            with self._sessions_lock:
                entries = tuple(
                    wire.SessionEntry(s.session_id, s.name,
                                      s.dispatch.current_id)
                    for s in self._sessions.values()
                    if s.role == wire.Role.SOURCE)
            self._send_safe(transport, wire.SessionList(entries))
        elif isinstance(msg, wire.Subscribe):
            target = self._get_session(msg.target_session)
            if target is None or target.role != wire.Role.SOURCE:
                status = wire.AckStatus.NO_SUCH_SESSION
            else:
                target.subscribers.add(session.session_id)
                status = wire.AckStatus.OK
            self._send_safe(transport, wire.SubscribeAck(
                target_session=msg.target_session, status=status))
        elif isinstance(msg, (wire.Hello,)):
            self._send_error(transport, wire.ErrorCode.MALFORMED, "duplicate HELLO")
            return _CLOSE
        else:
            # Server-to-client messages arriving at the server are protocol abuse.
            self._send_error(transport, wire.ErrorCode.MALFORMED,
                             f"unexpected {type(msg).__name__}")
            return _CLOSE
        return session

    def _route_frame(self, session: SessionState, msg: wire.FrameMsg) -> None:
        if session.role != wire.Role.SOURCE:
            self._send_safe(session.transport, wire.ErrorMsg(
                wire.ErrorCode.MALFORMED, "console sessions cannot send frames"))
            return
        with session.counters_lock:
            session.frames_received += 1
        if msg.width > MAX_DIMENSION or msg.height > MAX_DIMENSION:
            self._send_safe(session.transport, wire.ErrorMsg(
                wire.ErrorCode.FRAME_TOO_LARGE,
                f"frame {msg.width}x{msg.height} exceeds {MAX_DIMENSION}"))
            return
        problem = None
        try:
            fmt = PixelFormat(msg.format)
        except ValueError:
            problem = "format"
        else:
            problem = frame_violation(msg.width, msg.height, fmt, len(msg.payload))
        if problem is not None:
            self._send_safe(session.transport, wire.ErrorMsg(
                wire.ErrorCode.MALFORMED, f"invalid frame: {problem}"))
            return
        frame = Frame(seq=msg.seq, capture_ts_us=msg.capture_ts_us,
                      width=msg.width, height=msg.height, format=fmt,
                      pixels=msg.payload)
        replaced = session.dispatch.mailbox.submit(frame)
        if replaced:
            with session.counters_lock:
                session.frames_dropped += 1

    def _set_processor(self, session: SessionState, msg: wire.SetProcessor) -> None:
        target = self._resolve(session, msg.target_session)
        reply_target = msg.target_session

        def ack(status: int) -> None:
            ack_msg = wire.SetProcessorAck(target_session=reply_target,
                                           id=msg.id, status=status)
            body = wire.encode_message(ack_msg)
            recipients = {session}
            if target is not None:
                recipients.add(target)
                for sub_id in list(target.subscribers):
                    sub = self._get_session(sub_id)
                    if sub is not None:
                        recipients.add(sub)
            for r in recipients:
                self._send_body_safe(r, body)

        if target is None:
            ack(wire.AckStatus.NO_SUCH_SESSION)
            return
        if target.role != wire.Role.SOURCE:
            ack(wire.AckStatus.NOT_PERMITTED)
            return
        try:
            opts = ProcessorOptions.parse(msg.options)
        except BadOptions:
            ack(wire.AckStatus.BAD_OPTIONS)
            return
        try:
            # ACK goes out before the new id can appear in any result.
            target.dispatch.switch(msg.id, opts,
                                   before_effect=lambda: ack(wire.AckStatus.OK))
        except UnknownProcessor:
            ack(wire.AckStatus.UNKNOWN_ID)
        except BadOptions:
            ack(wire.AckStatus.BAD_OPTIONS)

    def _resolve(self, session: SessionState, target: int) -> Optional[SessionState]:
        if target == 0:
            return session
        return self._get_session(target)

    # -- send helpers ---------------------------------------------------------

    def _send_safe(self, transport: Transport, msg: wire.WireMessage) -> None:
        try:
            transport.send_body(wire.encode_message(msg))
        except Exception:
            pass

    def _send_body_safe(self, session: SessionState, body: bytes) -> None:
        try:
            session.transport.send_body(body)
        except Exception:
            pass

    def _send_error(self, transport: Transport, code: int, message: str) -> None:
        self._send_safe(transport, wire.ErrorMsg(code=code, message=message))


_CLOSE = object()


def _parse_hostport(text: str):
    host, _, port = text.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"bad listen address {text!r}")
    return host, int(port)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="relay-server",
        description="Frame relay server: routes streamed frames through "
                    "pluggable processors and returns annotations and "
                    "speech-ready descriptions.")
    parser.add_argument("--tcp-listen", default="127.0.0.1:7001", metavar="HOST:PORT")
    parser.add_argument("--ws-listen", default="127.0.0.1:7002", metavar="HOST:PORT")
    parser.add_argument("--vlm-endpoint",
                        default=os.environ.get("RELAY_VLM_ENDPOINT",
                                               "http://127.0.0.1:7010"))
    parser.add_argument("--vlm-model",
                        default=os.environ.get("RELAY_VLM_MODEL", "mock-model"))
    parser.add_argument("--vlm-timeout-ms", type=int,
                        default=int(os.environ.get("RELAY_VLM_TIMEOUT_MS", "10000")))
    parser.add_argument("--default-processor", default="scene_change")
    parser.add_argument("--dedup-ms", type=int, default=5000)
    parser.add_argument("--log-level", default="INFO")
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        config = ServerConfig(
            tcp_listen=args.tcp_listen,
            ws_listen=args.ws_listen,
            vlm_endpoint=args.vlm_endpoint,
            vlm_model=args.vlm_model,
            vlm_timeout_ms=args.vlm_timeout_ms,
            vlm_token=os.environ.get("RELAY_VLM_TOKEN"),
            default_processor=args.default_processor,
            dedup_ms=args.dedup_ms,
        )
        if config.tcp_listen == config.ws_listen:
            raise ValueError("tcp and ws listen addresses must differ")
        server = RelayServer(config)
    except (ValueError, UnknownProcessor) as e:
        print(f"relay-server: bad configuration: {e}", flush=True)
        return 2
    try:
        server.start()
    except OSError as e:
        print(f"relay-server: listener bind failure: {e}", flush=True)
        return 3
    server.run_forever()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
