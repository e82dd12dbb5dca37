"""Peer-to-peer transport between two participants.

Wire frame (all integers little-endian)::

    magic   4 bytes  b"PCPL"
    version u16      1
    kind    u8       0 handshake, 1 mesh, 2 field, 3 control
    length  u64      payload size in bytes
    payload

Field payload: name length u16, UTF-8 name, kind u8 (0 scalar, 1 vector2),
vertex count u32, then per vertex id u32 followed by one f64 per component.
Mesh payload: name length u16, UTF-8 name, vertex count u32, then per vertex
id u32, x f64, y f64.
"""

from __future__ import annotations

import enum
import json
import queue
import socket
import struct
import threading
import time
from dataclasses import dataclass

import numpy as np

from .errors import ChannelError, ConnectTimeout, DecodeMismatch, FrameCorrupt, PeerClosed, VersionMismatch
from .meshdata import CouplingMesh, DataField, Kind

MAGIC = b"PCPL"
PROTOCOL_VERSION = 1
HEADER = struct.Struct("<4sHBQ")
_NAME = struct.Struct("<H")
_COUNT = struct.Struct("<I")
_KIND = struct.Struct("<B")


class MessageKind(enum.IntEnum):
    HANDSHAKE = 0
    MESH = 1
    FIELD = 2
    CONTROL = 3


@dataclass(frozen=True)
class Message:
    kind: MessageKind
    payload: bytes = b""


def encode_frame(msg: Message, version: int = PROTOCOL_VERSION) -> bytes:
    return HEADER.pack(MAGIC, version, int(msg.kind), len(msg.payload)) + bytes(msg.payload)


def parse_header(header: bytes) -> tuple[int, MessageKind, int]:
    """Return ``(version, kind, payload length)``; the version is checked by the caller."""
    if len(header) != HEADER.size:
        raise FrameCorrupt(f"short frame header ({len(header)} bytes)")
    magic, version, kind, length = HEADER.unpack(header)
    if magic != MAGIC:
        raise FrameCorrupt(f"bad magic {magic!r}")
    try:
        kind = MessageKind(kind)
    except ValueError:
        raise FrameCorrupt(f"unknown message kind {kind}") from None
    return version, kind, length


def _check_version(version: int, expected: int) -> None:
    if version != expected:
        raise VersionMismatch(f"peer speaks protocol version {version}, expected {expected}")


def decode_frame(frame: bytes, expected_version: int = PROTOCOL_VERSION) -> Message:
    version, kind, length = parse_header(bytes(frame[:HEADER.size]))
    if len(frame) != HEADER.size + length:
        raise FrameCorrupt(f"frame announces {length} payload bytes, carries {len(frame) - HEADER.size}")
    _check_version(version, expected_version)
    return Message(kind, bytes(frame[HEADER.size:]))


# -- payload codecs -----------------------------------------------------------

def _pack_name(name: str) -> bytes:
    raw = name.encode("utf-8")
    return _NAME.pack(len(raw)) + raw


def _unpack_name(buf: memoryview, pos: int) -> tuple[str, int]:
    (n,) = _NAME.unpack_from(buf, pos)
    pos += _NAME.size
    return bytes(buf[pos:pos + n]).decode("utf-8"), pos + n


def encode_field(field: DataField) -> bytes:
    comps = field.components()
    n, k = comps.shape
    rec = np.zeros(n, dtype=[("id", "<u4"), ("v", "<f8", (k,))])
    rec["id"] = np.arange(n)
    rec["v"] = comps
    return _pack_name(field.name) + _KIND.pack(int(field.kind)) + _COUNT.pack(n) + rec.tobytes()


def decode_field(payload: bytes, mesh: CouplingMesh) -> DataField:
    buf = memoryview(payload)
    try:
        name, pos = _unpack_name(buf, 0)
        (kind,) = _KIND.unpack_from(buf, pos)
        kind = Kind(kind)
        (n,) = _COUNT.unpack_from(buf, pos + 1)
        pos += 1 + _COUNT.size
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise FrameCorrupt(f"malformed field payload: {exc}") from None
    if n != len(mesh):
        raise DecodeMismatch(f"field {name!r} has {n} vertices, mesh {mesh.name!r} has {len(mesh)}")
    k = kind.components
    dtype = np.dtype([("id", "<u4"), ("v", "<f8", (k,))])
    if len(buf) - pos != n * dtype.itemsize:
        raise FrameCorrupt(f"field payload length mismatch for {name!r}")
    rec = np.frombuffer(buf[pos:], dtype=dtype, count=n)
    if not np.array_equal(rec["id"], np.arange(n)):
        raise DecodeMismatch(f"field {name!r} carries vertex ids that do not match mesh {mesh.name!r}")
    vals = rec["v"].astype(float)
    return DataField(name, kind, mesh, vals[:, 0] if kind is Kind.SCALAR else vals)


def encode_mesh(mesh: CouplingMesh) -> bytes:
    n = len(mesh)
    rec = np.zeros(n, dtype=[("id", "<u4"), ("xy", "<f8", (2,))])
    rec["id"] = np.arange(n)
    rec["xy"] = mesh.points
    return _pack_name(mesh.name) + _COUNT.pack(n) + rec.tobytes()


def decode_mesh(payload: bytes) -> CouplingMesh:
    buf = memoryview(payload)
    try:
        name, pos = _unpack_name(buf, 0)
        (n,) = _COUNT.unpack_from(buf, pos)
        pos += _COUNT.size
    except (struct.error, UnicodeDecodeError) as exc:
        raise FrameCorrupt(f"malformed mesh payload: {exc}") from None
    dtype = np.dtype([("id", "<u4"), ("xy", "<f8", (2,))])
    if len(buf) - pos != n * dtype.itemsize:
        raise FrameCorrupt(f"mesh payload length mismatch for {name!r}")
    rec = np.frombuffer(buf[pos:], dtype=dtype, count=n)
    if not np.array_equal(rec["id"], np.arange(n)):
        raise DecodeMismatch(f"mesh {name!r} ids are not dense 0..{n - 1}")
    return CouplingMesh(name, rec["xy"].astype(float))


def encode_control(doc: dict) -> bytes:
    return json.dumps(doc, sort_keys=True).encode("utf-8")


def decode_control(payload: bytes) -> dict:
    try:
        return json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FrameCorrupt(f"malformed control payload: {exc}") from None


# -- channels -----------------------------------------------------------------

class Channel:
    """One end of a connection. ``send_message``/``recv_message`` are thread-safe."""

    def __init__(self, version: int = PROTOCOL_VERSION):
        self.version = version
        self.connected = False
        self._send_lock = threading.Lock()
        self._recv_lock = threading.Lock()

    def send_message(self, msg: Message) -> None:
        if not self.connected:
            raise ChannelError("channel is not connected")
        with self._send_lock:
            self._send_frame(encode_frame(msg, self.version))

    def recv_message(self) -> Message:
        if not self.connected:
            raise ChannelError("channel is not connected")
        with self._recv_lock:
            return self._recv_frame()

    def expect(self, kind: MessageKind) -> Message:
        msg = self.recv_message()
        if msg.kind != kind:
            raise ChannelError(f"expected {kind.name} message, got {msg.kind.name}")
        return msg

    def _handshake(self) -> None:
        self.connected = True
        try:
            self.send_message(Message(MessageKind.HANDSHAKE, encode_control({"protocol": self.version})))
            self.expect(MessageKind.HANDSHAKE)
        except Exception:
            self.close()
            raise

    def close(self) -> None:
        self.connected = False

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _send_frame(self, frame: bytes) -> None:
        raise NotImplementedError

    def _recv_frame(self) -> Message:
        raise NotImplementedError


_CLOSED = object()


class InProcessLink:
    """A pair of queues joining two in-process channel ends."""

    def __init__(self):
        self.queues = (queue.Queue(), queue.Queue())


class InProcessChannel(Channel):
    def __init__(self, link: InProcessLink, side: int, version: int = PROTOCOL_VERSION, timeout: float | None = None):
        super().__init__(version)
        if side not in (0, 1):
            raise ValueError("side must be 0 or 1")
        self.link = link
        self.side = side
        self.timeout = timeout
        self._inbox = link.queues[side]
        self._outbox = link.queues[1 - side]

    def _send_frame(self, frame: bytes) -> None:
        self._outbox.put(frame)

    def _recv_frame(self) -> Message:
        try:
            frame = self._inbox.get(timeout=self.timeout)
        except queue.Empty:
            raise ChannelError("timed out waiting for peer message") from None
        if frame is _CLOSED:
            self._inbox.put(_CLOSED)
            raise PeerClosed("peer closed the channel")
        return decode_frame(frame, self.version)

    def inject_raw(self, frame: bytes) -> None:
        """Place raw bytes in this end's inbox (test fixture hook)."""
        self._inbox.put(frame)

    def close(self) -> None:
        if self.connected:
            self._outbox.put(_CLOSED)
        super().close()


class TcpChannel(Channel):
    def __init__(self, sock: socket.socket, version: int = PROTOCOL_VERSION):
        super().__init__(version)
        self.sock = sock
        try:
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        except OSError:
            pass
        sock.settimeout(None)

    def _send_frame(self, frame: bytes) -> None:
        try:
            self.sock.sendall(frame)
        except OSError as exc:
            raise PeerClosed(f"send failed: {exc}") from None

    def _read_exact(self, n: int, started: bool) -> bytes:
        chunks = []
        got = 0
        while got < n:
            try:
                chunk = self.sock.recv(min(n - got, 1 << 20))
            except OSError as exc:
                if got or started:
                    raise FrameCorrupt(f"connection lost mid-frame ({got} of {n} bytes): {exc}") from None
                raise PeerClosed(f"receive failed: {exc}") from None
            if not chunk:
                if got == 0 and not started:
                    raise PeerClosed("peer closed the channel")
                raise FrameCorrupt(f"connection closed mid-frame ({got} of {n} bytes)")
            chunks.append(chunk)
            got += len(chunk)
        return b"".join(chunks)

    def _recv_frame(self) -> Message:
        header = self._read_exact(HEADER.size, started=False)
        version, kind, length = parse_header(header)
        payload = self._read_exact(length, started=True) if length else b""
        # payload is drained first so a mismatching peer is not reset mid-frame
        _check_version(version, self.version)
        return Message(kind, payload)

    def close(self) -> None:
        if self.sock is not None:
            try:
                self.sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            self.sock.close()
        super().close()


class TcpListener:
    """Bound acceptor socket; ``port=0`` picks a free port (see ``.port``)."""

    def __init__(self, host: str = "127.0.0.1", port: int = 0):
        self.sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self.sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        self.sock.bind((host, port))
        self.sock.listen(1)
        self.host = host
        self.port = self.sock.getsockname()[1]

    def accept(self, timeout: float = 10.0, version: int = PROTOCOL_VERSION) -> TcpChannel:
        self.sock.settimeout(timeout)
        try:
            conn, _ = self.sock.accept()
        except socket.timeout:
            raise ConnectTimeout(f"no initiator connected to {self.host}:{self.port} within {timeout} s") from None
        finally:
            self.sock.close()
        ch = TcpChannel(conn, version)
        ch._handshake()
        return ch

    def close(self) -> None:
        self.sock.close()


@dataclass(frozen=True)
class Tcp:
    host: str
    port: int
    role: str  # "acceptor" | "initiator"
    timeout: float = 10.0
    version: int = PROTOCOL_VERSION


@dataclass(frozen=True)
class InProcess:
    link: InProcessLink
    side: int
    version: int = PROTOCOL_VERSION
    timeout: float | None = None


def _dial(host: str, port: int, timeout: float, version: int) -> TcpChannel:
    deadline = time.monotonic() + timeout
    delay = 0.02
    while True:
        remaining = deadline - time.monotonic()
        if remaining <= 0:
            raise ConnectTimeout(f"could not reach {host}:{port} within {timeout} s")
        try:
            sock = socket.create_connection((host, port), timeout=remaining)
        except OSError:
            time.sleep(min(delay, max(0.0, deadline - time.monotonic())))
            delay = min(delay * 2, 0.5)
            continue
        ch = TcpChannel(sock, version)
        ch._handshake()
        return ch


def connect(mode: Tcp | InProcess) -> Channel:
    """Open one end of a channel and complete the version handshake."""
    if isinstance(mode, InProcess):
        ch = InProcessChannel(mode.link, mode.side, mode.version, mode.timeout)
        ch._handshake()
        return ch
    if mode.role == "acceptor":
        return TcpListener(mode.host, mode.port).accept(mode.timeout, mode.version)
    if mode.role == "initiator":
        return _dial(mode.host, mode.port, mode.timeout, mode.version)
    raise ValueError(f"unknown TCP role {mode.role!r}")


def inprocess_pair(timeout: float | None = None) -> tuple[InProcessChannel, InProcessChannel]:
    """Two connected in-process ends, handshake already done."""
    link = InProcessLink()
    a = InProcessChannel(link, 0, timeout=timeout)
    b = InProcessChannel(link, 1, timeout=timeout)
    for ch in (a, b):
        ch.connected = True
        ch.send_message(Message(MessageKind.HANDSHAKE, encode_control({"protocol": ch.version})))
    for ch in (a, b):
        ch.expect(MessageKind.HANDSHAKE)
    return a, b


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, _, port = endpoint.rpartition(":")
    if not host or not port.isdigit():
        raise ValueError(f"endpoint must look like HOST:PORT, got {endpoint!r}")
    return host, int(port)
