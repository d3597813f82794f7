"""
Upload transports between devices and the cloud collector.

Both transports move sessions as newline-delimited JSON records
({"e": [...], "x": [...], "y": k}) and decode them on the cloud side, so the
collected dataset is identical whichever one is used. The socket transport
runs a threaded TCP server on localhost; one connection carries one device
session and sessions may interleave. No session metadata is kept.
"""

import logging
import socket
import socketserver
import threading
from abc import ABC, abstractmethod
from typing import Iterable, List, Optional, Tuple

from Embedding_Distribution.errors import ConfigError

from .collector import RecordCollector
from .models.record_models import AnonymousRecord, CloudDataset

logger = logging.getLogger(__name__)

_ACK_PREFIX = b"ok "


def encode_session(records: Iterable[AnonymousRecord]) -> bytes:
    return "".join(r.to_wire_line() for r in records).encode("utf-8")


def decode_lines(lines: Iterable[str]) -> List[AnonymousRecord]:
    return [AnonymousRecord.from_wire_line(line) for line in lines if line.strip()]


class Transport(ABC):
    """
    Carries device sessions to a RecordCollector.

    Args:
        collector: Cloud-side sink
        capture: Keep a copy of every session's raw bytes for wire audits
    """

    def __init__(self, collector: Optional[RecordCollector] = None, capture: bool = False):
        self.collector = collector or RecordCollector()
        self.capture = capture
        self.captured_sessions: List[bytes] = []
        self._capture_lock = threading.Lock()

    def _record_capture(self, payload: bytes) -> None:
        if self.capture:
            with self._capture_lock:
                self.captured_sessions.append(payload)

    def start(self) -> None:
        """Bring the transport up. No-op for in-process delivery."""

    @abstractmethod
    def send_session(self, records: List[AnonymousRecord]) -> int:
        """Deliver one device's uploads; returns the number accepted."""

    def close(self) -> None:
        """Tear the transport down."""

    def build_dataset(self, shuffle_seed: int) -> CloudDataset:
        return self.collector.build(shuffle_seed)

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()


class InProcessTransport(Transport):
    """Encodes and decodes through the wire codec without a network hop."""

    def send_session(self, records: List[AnonymousRecord]) -> int:
        payload = encode_session(records)
        self._record_capture(payload)
        decoded = decode_lines(payload.decode("utf-8").splitlines())
        return self.collector.submit(decoded)


class UploadHandler(socketserver.StreamRequestHandler):
    """Reads one session until EOF, submits it, then acknowledges."""

    def __init__(self, *args, collector: RecordCollector, **kwargs):
        self.collector = collector
        super().__init__(*args, **kwargs)

    def handle(self):
        lines = [raw.decode("utf-8") for raw in self.rfile]
        try:
            accepted = self.collector.submit(decode_lines(lines))
            self.wfile.write(_ACK_PREFIX + str(accepted).encode() + b"\n")
        except Exception as e:
            logger.error(f"Rejected upload session: {e}")
            self.wfile.write(b"error\n")


class _UploadServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class SocketTransport(Transport):
    """
    Localhost TCP transport using an unframed line protocol.

    Args:
        host: Interface to bind
        port: Port to bind; 0 picks a free port
    """

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        collector: Optional[RecordCollector] = None,
        capture: bool = False,
    ):
        super().__init__(collector=collector, capture=capture)
        self.host = host
        self.port = port
        self._server: Optional[_UploadServer] = None
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> Tuple[str, int]:
        if self._server is None:
            return self.host, self.port
        return self._server.server_address[:2]

    def start(self) -> None:
        if self._server is not None:
            return
        handler = lambda *args, **kwargs: UploadHandler(*args, collector=self.collector, **kwargs)
        self._server = _UploadServer((self.host, self.port), handler)
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        logger.info(f"Upload server listening on {self.address[0]}:{self.address[1]}")

    def send_session(self, records: List[AnonymousRecord]) -> int:
        if self._server is None:
            self.start()
        payload = encode_session(records)
        self._record_capture(payload)

        with socket.create_connection(self.address) as conn:
            conn.sendall(payload)
            conn.shutdown(socket.SHUT_WR)
            reply = conn.makefile("rb").readline()

        if not reply.startswith(_ACK_PREFIX):
            raise ConnectionError(f"upload session rejected by server: {reply!r}")
        return int(reply[len(_ACK_PREFIX):].strip())

    def close(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None
            logger.info("Upload server stopped")


def create_transport(spec: str, capture: bool = False) -> Transport:
    """
    Build a transport from its CLI form.

    Args:
        spec: "inprocess" or "socket:HOST:PORT" (also "socket" for an
            ephemeral localhost port)
    """
    if spec == "inprocess":
        return InProcessTransport(capture=capture)
    if spec == "socket":
        return SocketTransport(capture=capture)
    if spec.startswith("socket:"):
        address = spec[len("socket:"):]
        host, sep, port = address.rpartition(":")
        if not sep or not port.isdigit():
            raise ConfigError(f"socket transport needs HOST:PORT, got {address!r}")
        return SocketTransport(host=host or "127.0.0.1", port=int(port), capture=capture)
    raise ConfigError(f"Unknown transport: {spec!r}")
