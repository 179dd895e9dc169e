"""Message transports linking the frontseat and backseat loops.

The in-process link is a pair of FIFO queues with explicit delivery,
giving strictly deterministic scheduling. The TCP link runs over a real
localhost socket pair with line framing; it exists to exercise the same
protocol across a genuine byte stream and makes no determinism promise.
"""

from __future__ import annotations

import socket
import threading
import time
from collections import deque

from .gateway import LineBuffer


class Endpoint:
    """One side of a link: send whole lines, poll received lines."""

    def send_line(self, line: bytes) -> None:
        raise NotImplementedError

    def poll_lines(self) -> list[bytes]:
        raise NotImplementedError

    def close(self) -> None:
        pass


class _InProcEndpoint(Endpoint):
    def __init__(self, outgoing: deque, incoming: deque):
        self._out = outgoing
        self._in = incoming

    def send_line(self, line: bytes) -> None:
        self._out.append(line)

    def poll_lines(self) -> list[bytes]:
        lines = list(self._in)
        self._in.clear()
        return lines


class InProcessLink:
    """Deterministic queue pair; messages are visible as soon as sent."""

    def __init__(self):
        a_to_b: deque = deque()
        b_to_a: deque = deque()
        self.frontseat = _InProcEndpoint(a_to_b, b_to_a)
        self.backseat = _InProcEndpoint(b_to_a, a_to_b)

    def close(self) -> None:
        pass


class _TcpEndpoint(Endpoint):
    def __init__(self, sock: socket.socket):
        self._sock = sock
        self._sock.setblocking(False)
        self._buffer = LineBuffer()
        self._lock = threading.Lock()

    def send_line(self, line: bytes) -> None:
        with self._lock:
            self._sock.sendall(line)

    def poll_lines(self) -> list[bytes]:
        chunks = []
        while True:
            try:
                data = self._sock.recv(65536)
            except BlockingIOError:
                break
            except OSError:
                break
            if not data:
                break
            chunks.append(data)
        if not chunks:
            return []
        return self._buffer.feed(b"".join(chunks))

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class TcpLink:
    """Localhost TCP pair; the frontseat listens, the backseat connects."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0, timeout: float = 5.0):
        self._listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self._listener.bind((host, port))
        self._listener.listen(1)
        self.address = self._listener.getsockname()

        client = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        client.connect(self.address)
        deadline = time.monotonic() + timeout
        self._listener.settimeout(max(deadline - time.monotonic(), 0.1))
        server_side, _ = self._listener.accept()
        server_side.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        client.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)

        self.frontseat = _TcpEndpoint(server_side)
        self.backseat = _TcpEndpoint(client)

    def close(self) -> None:
        self.frontseat.close()
        self.backseat.close()
        try:
            self._listener.close()
        except OSError:
            pass


def make_link(transport: str):
    if transport == "inproc":
        return InProcessLink()
    if transport.startswith("tcp"):
        # "tcp" or "tcp:host:port"
        parts = transport.split(":")
        if len(parts) == 3:
            return TcpLink(parts[1], int(parts[2]))
        return TcpLink()
    raise ValueError(f"unknown transport {transport!r} (expected inproc or tcp[:host:port])")
