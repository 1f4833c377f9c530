"""Owner <-> device control channel.

Every frame is ``u32be length || version (1) || msg_type (1) || payload`` where
``length`` covers version, type and payload. Payload fields are
``u32be length``-prefixed and appear in a fixed order per message type:

COMMAND  u32 leaf_index | command | public key | lamport signature | auth path
STATUS   u8 status | u32 replay_counter | mode | detail
REPORT   u64 seq | entry_id | u8 kind | reason | origin | u64 dropped

An auth path is ``u8 count`` followed by ``count`` times ``u8 side || sibling``.
"""

from __future__ import annotations

import enum
import logging
import socket
import socketserver
import struct
import threading
from collections import deque
from dataclasses import dataclass

from .commands import Command, CommandDecodeError, VerifiedCommand
from .digest import EntryId, EntryKind
from .engine import Engine, Report
from .ots import (
    LamportPublicKey,
    LamportSignature,
    MerkleKeys,
    OtsError,
    OtsParams,
    PathNode,
    Side,
    merkle_verify,
)

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
MAX_FRAME = 1 << 20
REPORT_QUEUE_SIZE = 1024


class MsgType(enum.IntEnum):
    COMMAND = 1
    STATUS = 2
    REPORT = 3


class StatusCode(enum.IntEnum):
    ACCEPTED = 0
    BAD_SIGNATURE = 1
    REPLAY_REJECTED = 2
    MALFORMED_FRAME = 3


class ProtocolError(Exception):
    status = StatusCode.MALFORMED_FRAME


class MalformedFrame(ProtocolError):
    status = StatusCode.MALFORMED_FRAME


class BadSignature(ProtocolError):
    status = StatusCode.BAD_SIGNATURE


class ReplayRejected(ProtocolError):
    status = StatusCode.REPLAY_REJECTED

    def __init__(self, leaf_index: int, counter: int):
        super().__init__(f"leaf {leaf_index} <= replay counter {counter}")
        self.leaf_index = leaf_index
        self.counter = counter


# -- framing -----------------------------------------------------------------


def encode_frame(msg_type: MsgType, payload: bytes) -> bytes:
    body = bytes([PROTOCOL_VERSION, msg_type]) + payload
    return struct.pack(">I", len(body)) + body


def decode_frame(frame: bytes) -> tuple[MsgType, bytes]:
    """Split one complete frame; anything off by a byte is MalformedFrame."""
    if len(frame) < 6:
        raise MalformedFrame("frame shorter than header")
    (length,) = struct.unpack_from(">I", frame)
    if length != len(frame) - 4 or length > MAX_FRAME:
        raise MalformedFrame(f"length field {length} does not match frame")
    if frame[4] != PROTOCOL_VERSION:
        raise MalformedFrame(f"unsupported version {frame[4]}")
    try:
        msg_type = MsgType(frame[5])
    except ValueError:
        raise MalformedFrame(f"unknown message type {frame[5]}") from None
    return msg_type, frame[6:]


def _recv_exact(sock: socket.socket, n: int) -> bytes | None:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return bytes(buf)


def read_frame(sock: socket.socket) -> bytes | None:
    """Read one raw frame; None on clean EOF."""
    head = _recv_exact(sock, 4)
    if head is None:
        return None
    (length,) = struct.unpack(">I", head)
    if length > MAX_FRAME:
        raise MalformedFrame(f"frame of {length} bytes exceeds limit")
    body = _recv_exact(sock, length)
    if body is None:
        raise MalformedFrame("connection closed mid-frame")
    return head + body


def _lp(data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + data


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise MalformedFrame("payload truncated")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def field(self) -> bytes:
        return self.take(self.u32())

    def done(self) -> None:
        if self.pos != len(self.data):
            raise MalformedFrame("trailing bytes in payload")


# -- signed commands ---------------------------------------------------------


@dataclass(frozen=True)
class SignedCommand:
    leaf_index: int
    command: Command
    public_key: LamportPublicKey
    signature: LamportSignature
    path: tuple[PathNode, ...]

    def encode(self) -> bytes:
        path = bytes([len(self.path)]) + b"".join(bytes([pn.side.value]) + pn.sibling for pn in self.path)
        payload = (
            struct.pack(">I", self.leaf_index)
            + _lp(self.command.encode())
            + _lp(self.public_key.to_bytes())
            + _lp(self.signature.to_bytes())
            + _lp(path)
        )
        return encode_frame(MsgType.COMMAND, payload)

    @classmethod
    def decode(cls, frame: bytes) -> "SignedCommand":
        msg_type, payload = decode_frame(frame)
        if msg_type is not MsgType.COMMAND:
            raise MalformedFrame(f"expected COMMAND, got {msg_type.name}")
        r = _Reader(payload)
        leaf_index = r.u32()
        cmd_blob, pk_blob, sig_blob, path_blob = r.field(), r.field(), r.field(), r.field()
        r.done()
        try:
            command = Command.decode(cmd_blob)
            if len(pk_blob) < 2:
                raise MalformedFrame("public key truncated")
            params = OtsParams(struct.unpack_from(">H", pk_blob)[0])
            pk = LamportPublicKey.from_bytes(pk_blob, params)
            sig = LamportSignature.from_bytes(sig_blob, params)
        except (CommandDecodeError, OtsError, ValueError) as exc:
            raise MalformedFrame(str(exc)) from exc
        pr = _Reader(path_blob)
        path = []
        for _ in range(pr.u8()):
            side = pr.u8()
            if side not in (0, 1):
                raise MalformedFrame(f"bad path side {side}")
            path.append(PathNode(pr.take(params.nbytes), Side(side)))
        pr.done()
        return cls(leaf_index, command, pk, sig, tuple(path))


def owner_sign_command(keys: MerkleKeys, i: int, command: Command) -> SignedCommand:
    ms = keys.sign(i, command.encode())
    return SignedCommand(i, command, ms.public_key, ms.signature, ms.path)


def verify_and_accept(replay_counter: int, sc: SignedCommand, master_root: bytes) -> VerifiedCommand:
    """Check the Merkle signature, then the strictly-increasing leaf index.

    The caller owns the counter and must advance it to ``sc.leaf_index`` on
    success, atomically with this check.
    """
    if len(master_root) != sc.public_key.params.nbytes:
        raise BadSignature("public key size does not match the master key")
    try:
        ok = merkle_verify(master_root, sc.command.encode(), sc.signature, sc.public_key, sc.path, sc.leaf_index)
    except OtsError as exc:
        raise MalformedFrame(str(exc)) from exc
    if not ok:
        raise BadSignature(f"signature for leaf {sc.leaf_index} does not verify")
    if sc.leaf_index <= replay_counter:
        raise ReplayRejected(sc.leaf_index, replay_counter)
    return VerifiedCommand(sc.command, sc.leaf_index)


# -- status and report frames ------------------------------------------------


@dataclass(frozen=True)
class Status:
    code: StatusCode
    replay_counter: int
    mode: str
    detail: str = ""

    @property
    def accepted(self) -> bool:
        return self.code is StatusCode.ACCEPTED

    def encode(self) -> bytes:
        payload = (
            bytes([self.code])
            + struct.pack(">I", self.replay_counter)
            + _lp(self.mode.encode())
            + _lp(self.detail.encode())
        )
        return encode_frame(MsgType.STATUS, payload)

    @classmethod
    def decode(cls, frame: bytes) -> "Status":
        msg_type, payload = decode_frame(frame)
        if msg_type is not MsgType.STATUS:
            raise MalformedFrame(f"expected STATUS, got {msg_type.name}")
        r = _Reader(payload)
        try:
            code = StatusCode(r.u8())
        except ValueError as exc:
            raise MalformedFrame(str(exc)) from exc
        counter, mode, detail = r.u32(), r.field(), r.field()
        r.done()
        return cls(code, counter, mode.decode(), detail.decode())


def encode_report(report: Report, dropped: int = 0) -> bytes:
    payload = (
        struct.pack(">Q", report.seq)
        + _lp(bytes(report.entry_id))
        + bytes([report.kind.value])
        + _lp(report.reason.encode())
        + _lp(report.origin.encode())
        + struct.pack(">Q", dropped)
    )
    return encode_frame(MsgType.REPORT, payload)


def decode_report(frame: bytes) -> tuple[Report, int]:
    msg_type, payload = decode_frame(frame)
    if msg_type is not MsgType.REPORT:
        raise MalformedFrame(f"expected REPORT, got {msg_type.name}")
    r = _Reader(payload)
    seq, eid, kind = r.u64(), r.field(), r.u8()
    reason, origin, dropped = r.field(), r.field(), r.u64()
    r.done()
    try:
        report = Report(seq, EntryId(eid), EntryKind(kind), reason.decode(), origin.decode())
    except ValueError as exc:
        raise MalformedFrame(str(exc)) from exc
    return report, dropped


# -- device side -------------------------------------------------------------


class CommandGate:
    """Authenticates command frames and applies accepted ones to the engine."""

    def __init__(self, engine: Engine, master_root: bytes):
        self.engine = engine
        self.master_root = master_root

    def submit(self, sc: SignedCommand) -> VerifiedCommand:
        with self.engine.lock:
            vc = verify_and_accept(self.engine.state.replay_counter, sc, self.master_root)
            self.engine.state.replay_counter = vc.leaf_index
            self.engine.apply_command(vc)
            return vc

    def status(self, code: StatusCode = StatusCode.ACCEPTED, detail: str = "") -> Status:
        st = self.engine.state
        return Status(code, st.replay_counter, st.mode.value, detail)

    def handle_frame(self, frame: bytes) -> Status:
        try:
            sc = SignedCommand.decode(frame)
            vc = self.submit(sc)
        except ProtocolError as exc:
            log.warning("rejected command frame: %s", exc)
            return self.status(exc.status, str(exc))
        return self.status(detail=f"{vc.command.code.name} leaf {vc.leaf_index}")


class ReportQueue:
    """Bounded FIFO of reports; when full the oldest report is dropped."""

    def __init__(self, maxlen: int = REPORT_QUEUE_SIZE):
        self._items: deque[Report] = deque()
        self.maxlen = maxlen
        self.dropped = 0
        self._cond = threading.Condition()

    def put(self, report: Report) -> None:
        with self._cond:
            if len(self._items) >= self.maxlen:
                self._items.popleft()
                self.dropped += 1
            self._items.append(report)
            self._cond.notify()

    def get(self, timeout: float | None = None) -> Report | None:
        with self._cond:
            if not self._items and not self._cond.wait_for(lambda: self._items, timeout):
                return None
            return self._items.popleft()

    def __len__(self) -> int:
        return len(self._items)


def parse_endpoint(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"expected host:port, got {text!r}")
    return host or "127.0.0.1", int(port)


def send_report(report: Report, owner_endpoint: tuple[str, int], dropped: int = 0, timeout: float = 5.0) -> None:
    with socket.create_connection(owner_endpoint, timeout=timeout) as sock:
        sock.sendall(encode_report(report, dropped))


class ReportForwarder(threading.Thread):
    """Drains a ReportQueue to the owner; delivery failures are logged, not raised."""

    def __init__(self, queue: ReportQueue, owner_endpoint: tuple[str, int]):
        super().__init__(daemon=True, name="report-forwarder")
        self.queue = queue
        self.owner_endpoint = owner_endpoint
        self._stop_evt = threading.Event()

    def run(self) -> None:
        # one long-lived connection keeps reports ordered at the owner
        sock: socket.socket | None = None
        while not self._stop_evt.is_set():
            report = self.queue.get(timeout=0.1)
            if report is None:
                continue
            try:
                if sock is None:
                    sock = socket.create_connection(self.owner_endpoint, timeout=5.0)
                sock.sendall(encode_report(report, self.queue.dropped))
            except OSError as exc:
                log.error("report %d not delivered: %s", report.seq, exc)
                if sock is not None:
                    sock.close()
                sock = None
        if sock is not None:
            sock.close()

    def stop(self) -> None:
        self._stop_evt.set()


class _ControlHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        gate: CommandGate = self.server.gate  # type: ignore[attr-defined]
        serve_connection(gate, self.request)


def serve_connection(gate: CommandGate, sock: socket.socket) -> None:
    """Answer every command frame on ``sock`` with a status frame until EOF."""
    while True:
        try:
            frame = read_frame(sock)
        except MalformedFrame as exc:
            sock.sendall(gate.status(StatusCode.MALFORMED_FRAME, str(exc)).encode())
            return
        except OSError as exc:
            log.info("control connection dropped: %s", exc)
            return
        if frame is None:
            return
        try:
            sock.sendall(gate.handle_frame(frame).encode())
        except OSError as exc:
            log.info("control connection dropped: %s", exc)
            return


class ControlServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, gate: CommandGate, listen: tuple[str, int]):
        self.gate = gate
        super().__init__(listen, _ControlHandler)

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]


def run_control_server(engine: Engine, master_root: bytes, listen: tuple[str, int]) -> ControlServer:
    """Start a control server in a background thread; call ``shutdown()`` to stop it."""
    server = ControlServer(CommandGate(engine, master_root), listen)
    threading.Thread(target=server.serve_forever, daemon=True, name="control-server").start()
    return server


class ReportCollector(socketserver.ThreadingTCPServer):
    """Owner-side report listener; keeps every received report in order."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, listen: tuple[str, int] = ("127.0.0.1", 0)):
        self.reports: list[tuple[Report, int]] = []
        self.received = threading.Condition()
        super().__init__(listen, _ReportHandler)

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]

    def wait_for(self, count: int, timeout: float = 5.0) -> bool:
        with self.received:
            return self.received.wait_for(lambda: len(self.reports) >= count, timeout)


class _ReportHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        server: ReportCollector = self.server  # type: ignore[assignment]
        while True:
            try:
                frame = read_frame(self.request)
                if frame is None:
                    return
                item = decode_report(frame)
            except (MalformedFrame, OSError) as exc:
                log.warning("bad report frame: %s", exc)
                return
            with server.received:
                server.reports.append(item)
                server.received.notify_all()


def send_frame(endpoint: tuple[str, int], frame: bytes, timeout: float = 10.0) -> Status:
    """Owner side: deliver one command frame and wait for the status reply."""
    with socket.create_connection(endpoint, timeout=timeout) as sock:
        sock.sendall(frame)
        reply = read_frame(sock)
    if reply is None:
        raise MalformedFrame("device closed the connection without a status")
    return Status.decode(reply)
