"""Relay client: reads frames from a directory or synthetic source, paces
them to the server over TCP, prints a transcript of descriptions, and
optionally pipes each description into an external speech command.
"""
from __future__ import annotations

import argparse
import logging
import socket
import subprocess
import sys
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from . import glyphs, pnm, wire
from .model import Frame, PixelFormat, Priority

log = logging.getLogger("framerelay.client")

EXIT_OK = 0
EXIT_BAD_ARGS = 2
EXIT_CONNECT = 3
EXIT_PROTOCOL = 4
EXIT_DROPPED = 5

SYNTH_W, SYNTH_H = 320, 240


class SourceError(ValueError):
    pass


@dataclass
class FrameSource:
    spec: str
    fps: float = 5.0
    loop: bool = False

    def __post_init__(self):
        if self.fps <= 0:
            raise SourceError("fps must be > 0")
        kind, _, arg = self.spec.partition(":")
        if kind == "dir":
            if not arg:
                raise SourceError("dir source needs a path")
        elif kind == "synthetic":
            name, _, _ = arg.partition("=")
            if name not in ("bars", "text", "moving_box"):
                raise SourceError(f"unknown synthetic source {arg!r}")
        else:
            raise SourceError(f"unknown source spec {self.spec!r}")

    def frames(self) -> Iterator[Frame]:
        return load_frames(self)


def _epoch_us(start: float) -> int:
    return int((time.monotonic() - start) * 1e6)


def load_frames(source: FrameSource) -> Iterator[Frame]:
    """Yield validated frames; seq starts at 1, capture_ts_us is monotone."""
    kind, _, arg = source.spec.partition(":")
    start = time.monotonic()
    seq = 0

    def make(width, height, fmt, pixels) -> Frame:
        nonlocal seq
        seq += 1
        return Frame(seq=seq, capture_ts_us=_epoch_us(start), width=width,
                     height=height, format=fmt, pixels=pixels)

    if kind == "dir":
        root = Path(arg)
        files = sorted(p for p in root.iterdir()
                       if p.suffix.lower() in (".pgm", ".ppm"))
        if not files:
            raise SourceError(f"no PGM/PPM files in {root}")
        while True:
            for path in files:
                width, height, fmt, pixels = pnm.read_pnm(path)
                yield make(width, height, fmt, pixels)
            if not source.loop:
                return
    else:
        name, _, value = arg.partition("=")
        while True:
            if name == "bars":
                col = (np.arange(SYNTH_W, dtype=np.uint8) // 40) * 36
                canvas = np.tile(col, (SYNTH_H, 1))
            elif name == "text":
                canvas = np.zeros((SYNTH_H, SYNTH_W), dtype=np.uint8)
                text = value.upper()
                x = max((SYNTH_W - glyphs.text_width_px(text)) // 2, 0)
                y = (SYNTH_H - glyphs.GLYPH_H) // 2
                glyphs.render_text(text, x, y, canvas)
            else:  # moving_box: 16x16 white square, 4 px rightward per frame
                canvas = np.zeros((SYNTH_H, SYNTH_W), dtype=np.uint8)
                x = (seq * 4) % (SYNTH_W - 16)
                y = (SYNTH_H - 16) // 2
                canvas[y:y + 16, x:x + 16] = 255
            yield make(SYNTH_W, SYNTH_H, PixelFormat.GRAY8, canvas.tobytes())
            if name in ("bars", "text") and not source.loop and seq >= 1:
                # static synthetics emit frames forever only under --loop;
                # otherwise the single frame suffices
                return


def transcript_line(result: wire.ResultMsg) -> Optional[str]:
    if result.description is None:
        return None
    priority = "interrupt" if result.description.priority == Priority.INTERRUPT else "routine"
    return (f"[seq={result.frame_seq}][proc={result.processor_id}]"
            f"[p={priority}] {result.description.text}")


class TtsHook:
    """Runs a user-supplied shell command per utterance, text on stdin.
    INTERRUPT text terminates any still-running previous utterance."""

    def __init__(self, cmd_template: str):
        self.cmd = cmd_template
        self.enabled = True
        self._current: Optional[subprocess.Popen] = None
        self._lock = threading.Lock()

    def speak(self, text: str, priority: int) -> None:
        if not self.enabled:
            return
        with self._lock:
            if priority == Priority.INTERRUPT and self._current is not None:
                if self._current.poll() is None:
                    self._current.kill()
                    self._current.wait()
            try:
                proc = subprocess.Popen(self.cmd, shell=True,
                                        stdin=subprocess.PIPE)
            except OSError as e:
                log.warning("tts command failed to launch (%s); hook disabled", e)
                self.enabled = False
                return
            self._current = proc
        try:
            proc.stdin.write(text.encode("utf-8") + b"\n")
            proc.stdin.close()
        except (BrokenPipeError, OSError):
            pass

    def wait_idle(self, timeout: float = 5.0) -> None:
        with self._lock:
            proc = self._current
        if proc is not None:
            try:
                proc.wait(timeout)
            except subprocess.TimeoutExpired:
                pass


class _Receiver(threading.Thread):
    """Drains RESULTs off the socket; writes the transcript and feeds the
    TTS hook without ever blocking the sender."""

    def __init__(self, sock: socket.socket, tts: Optional[TtsHook],
                 out=sys.stdout):
        super().__init__(name="client-recv", daemon=True)
        self.sock = sock
        self.tts = tts
        self.out = out
        self.results = 0
        self.last_stats: Optional[wire.StatsMsg] = None
        self.protocol_error = False
        self.dropped = False
        self._buf = bytearray()
        self._halt = threading.Event()

    def run(self) -> None:
        try:
            while not self._halt.is_set():
                outcome = wire.decode_message(bytes(self._buf))
                if isinstance(outcome, wire.Complete):
                    del self._buf[:outcome.bytes_consumed]
                    self._handle(outcome.message)
                    continue
                if isinstance(outcome, wire.Malformed):
                    self.protocol_error = True
                    return
                chunk = self.sock.recv(65536)
                if not chunk:
                    self.dropped = not self._halt.is_set()
                    return
                self._buf += chunk
        except OSError:
            self.dropped = not self._halt.is_set()

    def _handle(self, msg: wire.WireMessage) -> None:
        if isinstance(msg, wire.ResultMsg):
            self.results += 1
            line = transcript_line(msg)
            if line is not None:
                print(line, file=self.out, flush=True)
                if self.tts is not None:
                    threading.Thread(
                        target=self.tts.speak,
                        args=(msg.description.text, msg.description.priority),
                        daemon=True).start()
        elif isinstance(msg, wire.StatsMsg):
            self.last_stats = msg
            print(f"[stats] session={msg.session_id} received={msg.frames_received} "
                  f"processed={msg.frames_processed} dropped={msg.frames_dropped} "
                  f"suppressed={msg.descriptions_suppressed}",
                  file=self.out, flush=True)
        elif isinstance(msg, wire.SetProcessorAck):
            if msg.status != wire.AckStatus.OK:
                print(f"[warn] set-processor {msg.id!r} failed "
                      f"(status {msg.status}); continuing on default",
                      file=self.out, flush=True)
        elif isinstance(msg, wire.ErrorMsg):
            print(f"[error {msg.code}] {msg.message}", file=self.out, flush=True)

    def stop(self) -> None:
        self._halt.set()


def run_session(server: str, source: FrameSource, processor: Optional[str] = None,
                options: str = "", name: str = "relay-client",
                tts_cmd: Optional[str] = None, stats_interval_s: float = 0,
                out=sys.stdout, max_frames: Optional[int] = None) -> int:
    host, _, port = server.rpartition(":")
    try:
        sock = socket.create_connection((host or "127.0.0.1", int(port)), timeout=5)
    except (OSError, ValueError) as e:
        print(f"relay-client: connect failed: {e}", file=sys.stderr)
        return EXIT_CONNECT
    sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

    def send(msg: wire.WireMessage) -> None:
        sock.sendall(wire.encode_framed(msg))

    try:
        send(wire.Hello(version=1, role=wire.Role.SOURCE, name=name))
        ack = _read_one(sock)
        if not isinstance(ack, wire.HelloAck):
            print("relay-client: handshake failed", file=sys.stderr)
            return EXIT_PROTOCOL
    except (OSError, wire.MalformedMessage):
        return EXIT_PROTOCOL

    tts = TtsHook(tts_cmd) if tts_cmd else None
    receiver = _Receiver(sock, tts, out=out)
    receiver.start()

    if processor:
        send(wire.SetProcessor(target_session=0, id=processor, options=options))

    interval = 1.0 / source.fps
    sent = 0
    status = EXIT_OK
    next_send = time.monotonic()
    last_stats_req = time.monotonic()
    try:
        for frame in source.frames():
            now = time.monotonic()
            if now < next_send:
                time.sleep(next_send - now)
            send(wire.FrameMsg(seq=frame.seq, capture_ts_us=frame.capture_ts_us,
                               width=frame.width, height=frame.height,
                               format=int(frame.format), payload=frame.pixels))
            sent += 1
            next_send += interval
            if stats_interval_s and time.monotonic() - last_stats_req >= stats_interval_s:
                send(wire.StatsRequest(target_session=0))
                last_stats_req = time.monotonic()
            if max_frames is not None and sent >= max_frames:
                break
            if receiver.protocol_error or receiver.dropped:
                break
    except OSError:
        status = EXIT_DROPPED
    except pnm.PnmError as e:
        print(f"relay-client: {e}", file=sys.stderr)

    # Source exhausted: wait up to 2 s for trailing results to drain.
    deadline = time.monotonic() + 2.0
    while time.monotonic() < deadline:
        receiver.last_stats = None
        try:
            send(wire.StatsRequest(target_session=0))
        except OSError:
            break
        poll_until = time.monotonic() + 0.5
        while receiver.last_stats is None and time.monotonic() < poll_until:
            time.sleep(0.02)
        stats = receiver.last_stats
        if stats is not None and stats.frames_received >= sent and not _pending(stats):
            break
        time.sleep(0.1)
    receiver.stop()
    try:
        sock.shutdown(socket.SHUT_RDWR)
    except OSError:
        pass
    sock.close()
    receiver.join(timeout=2)
    if tts:
        tts.wait_idle()
    if receiver.protocol_error:
        return EXIT_PROTOCOL
    if receiver.dropped and status == EXIT_OK:
        return EXIT_DROPPED
    return status


def _pending(stats: wire.StatsMsg) -> bool:
    return stats.frames_processed + stats.frames_dropped < stats.frames_received


def _read_one(sock: socket.socket, timeout: float = 5.0) -> wire.WireMessage:
    sock.settimeout(timeout)
    buf = bytearray()
    try:
        while True:
            outcome = wire.decode_message(bytes(buf))
            if isinstance(outcome, wire.Complete):
                return outcome.message
            if isinstance(outcome, wire.Malformed):
                raise wire.MalformedMessage(outcome.reason)
            chunk = sock.recv(65536)
            if not chunk:
                raise OSError("connection closed during handshake")
            buf += chunk
    finally:
        sock.settimeout(None)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="relay-client",
        description="Stream frames to a relay server and print the spoken "
                    "transcript.")
    parser.add_argument("--server", default="127.0.0.1:7001", metavar="HOST:PORT")
    parser.add_argument("--source", required=True,
                        help="dir:<path> | synthetic:bars | synthetic:text=<STRING> "
                             "| synthetic:moving_box")
    parser.add_argument("--fps", type=float, default=5.0)
    parser.add_argument("--processor", default=None)
    parser.add_argument("--options", default="", help='"k=v;k=v"')
    parser.add_argument("--loop", action="store_true")
    parser.add_argument("--tts-cmd", default=None, metavar="SHELL-COMMAND")
    parser.add_argument("--name", default="relay-client")
    parser.add_argument("--stats-interval-s", type=float, default=0)
    parser.add_argument("--max-frames", type=int, default=None)
    parser.add_argument("--log-level", default="WARNING")
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper())
    try:
        source = FrameSource(spec=args.source, fps=args.fps, loop=args.loop)
    except SourceError as e:
        print(f"relay-client: {e}", file=sys.stderr)
        return EXIT_BAD_ARGS
    return run_session(args.server, source, processor=args.processor,
                       options=args.options, name=args.name,
                       tts_cmd=args.tts_cmd,
                       stats_interval_s=args.stats_interval_s,
                       max_frames=args.max_frames)


if __name__ == "__main__":
    raise SystemExit(main())
