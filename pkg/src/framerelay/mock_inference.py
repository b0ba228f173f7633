"""Deterministic local stand-in for a chat-completions endpoint.

The reply content is a pure function of the raw request body bytes
(FNV-1a), so any change to prompt, model, or image observably changes the
output. A latency knob exists to exercise the client timeout path.
"""
from __future__ import annotations

import argparse
import json
import os
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

FNV_OFFSET_BASIS = 2166136261
FNV_PRIME = 16777619


def fnv1a32(data: bytes) -> int:
    h = FNV_OFFSET_BASIS
    for byte in data:
        h = ((h ^ byte) * FNV_PRIME) & 0xFFFFFFFF
    return h


class MockInferenceServer:
    def __init__(self, host: str = "127.0.0.1", port: int = 7010,
                 latency_ms: int = 0, fail_every: int = 0):
        if latency_ms < 0:
            raise ValueError("latency_ms must be >= 0")
        self.latency_ms = latency_ms
        self.fail_every = fail_every
        self._count = 0
        self._count_lock = threading.Lock()
        self.request_bodies: list[bytes] = []  # raw bodies, arrival order
        outer = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, fmt, *args):
                pass

            def _send(self, status: int, payload: dict) -> None:
                body = json.dumps(payload).encode("utf-8")
                try:
                    self.send_response(status)
                    self.send_header("Content-Type", "application/json")
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                except (BrokenPipeError, ConnectionResetError):
                    # caller gave up (e.g. timed out during injected latency)
                    pass

            def do_POST(self):
                if self.path != "/v1/chat/completions":
                    self._send(404, {"error": "not found"})
                    return
                length = int(self.headers.get("Content-Length", "0"))
                raw = self.rfile.read(length)
                with outer._count_lock:
                    outer._count += 1
                    count = outer._count
                    outer.request_bodies.append(raw)
                if outer.latency_ms:
                    time.sleep(outer.latency_ms / 1000)
                if outer.fail_every > 0 and count % outer.fail_every == 0:
                    self._send(500, {"error": "mock failure"})
                    return
                n = fnv1a32(raw) % 1000
                self._send(200, {"choices": [{"message": {
                    "content": f"mock description {n}"}}]})

            def do_GET(self):
                self._send(404, {"error": "not found"})

        self._httpd = ThreadingHTTPServer((host, port), Handler)
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def endpoint(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> None:
        self._thread = threading.Thread(target=self._httpd.serve_forever,
                                        name="mock-inference", daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread:
            self._thread.join()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mock-inference",
        description="Deterministic chat-completions mock server.")
    parser.add_argument("--listen", default="127.0.0.1:7010", metavar="HOST:PORT")
    parser.add_argument("--latency-ms", type=int, default=None)
    parser.add_argument("--fail-every", type=int, default=0)
    args = parser.parse_args(argv)
    host, _, port = args.listen.rpartition(":")
    latency_ms = args.latency_ms
    if latency_ms is None:
        latency_ms = int(os.environ.get("MOCK_LATENCY_MS", "0"))
    server = MockInferenceServer(host or "127.0.0.1", int(port),
                                 latency_ms=latency_ms, fail_every=args.fail_every)
    print(f"mock-inference listening on {server.endpoint} "
          f"(latency {latency_ms} ms, fail_every {args.fail_every})")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
