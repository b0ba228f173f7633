"""Small synchronous peers for exercising the relay server in tests."""
import socket
import time

from websockets.sync.client import connect as ws_connect

from framerelay import wire


class TcpPeer:
    def __init__(self, port, host="127.0.0.1"):
        self.sock = socket.create_connection((host, port), timeout=5)
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self._buf = bytearray()
        self.bodies = []  # raw body bytes, aligned with received messages

    def send(self, msg):
        self.sock.sendall(wire.encode_framed(msg))

    def send_raw(self, data: bytes):
        self.sock.sendall(data)

    def recv(self, timeout=5.0):
        deadline = time.monotonic() + timeout
        while True:
            outcome = wire.decode_message(bytes(self._buf))
            if isinstance(outcome, wire.Complete):
                self.bodies.append(bytes(self._buf[4:outcome.bytes_consumed]))
                del self._buf[:outcome.bytes_consumed]
                return outcome.message
            if isinstance(outcome, wire.Malformed):
                raise AssertionError(f"malformed from server: {outcome.reason}")
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise TimeoutError("no message from server")
            self.sock.settimeout(remaining)
            chunk = self.sock.recv(65536)
            if not chunk:
                raise ConnectionError("server closed connection")
            self._buf += chunk

    def recv_until(self, pred, timeout=5.0):
        deadline = time.monotonic() + timeout
        while True:
            msg = self.recv(timeout=max(deadline - time.monotonic(), 0.01))
            if pred(msg):
                return msg

    def drain(self, duration=0.2):
        got = []
        deadline = time.monotonic() + duration
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return got
            try:
                got.append(self.recv(timeout=remaining))
            except (TimeoutError, ConnectionError):
                return got

    def hello(self, role=wire.Role.SOURCE, name="peer", version=1):
        self.send(wire.Hello(version=version, role=role, name=name))
        return self.recv()

    def close(self):
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class WsPeer:
    def __init__(self, port, host="127.0.0.1"):
        self.ws = ws_connect(f"ws://{host}:{port}", open_timeout=5)
        self.bodies = []

    def send(self, msg):
        self.ws.send(wire.encode_message(msg))

    def recv(self, timeout=5.0):
        body = self.ws.recv(timeout=timeout)
        self.bodies.append(body)
        return wire.decode_body(body)

    def recv_until(self, pred, timeout=5.0):
        deadline = time.monotonic() + timeout
        while True:
            msg = self.recv(timeout=max(deadline - time.monotonic(), 0.01))
            if pred(msg):
                return msg

    def hello(self, role=wire.Role.CONSOLE, name="ws-peer", version=1):
        self.send(wire.Hello(version=version, role=role, name=name))
        return self.recv()

    def close(self):
        self.ws.close()
