"""Whitelist identifiers.

Every authorized action is keyed by a SHA-256 digest over a length-prefixed
record::

    kind_tag (1 byte)
    u64be len(program_bytes) || program_bytes
    u64be len(path)          || path (UTF-8)
    u64be len(extra)         || extra        (empty for exec entries)

The invoked path is hashed verbatim, so BusyBox applets reached through
different symlinks get different identifiers.
"""

from __future__ import annotations

import enum
import hashlib
import struct
from dataclasses import dataclass

DIGEST_SIZE = 32
MAX_SIGNAL = 64


class DigestError(ValueError):
    pass


class MissingContext(DigestError):
    pass


class InvalidPath(DigestError):
    pass


class InvalidSignal(DigestError):
    pass


class EntryKind(enum.Enum):
    EXEC = 1
    MODULE_INSERT = 2
    MODULE_REMOVE = 3
    SIGNAL = 4

    @property
    def tag(self) -> str:
        return _TEXT_TAGS[self]

    @classmethod
    def from_tag(cls, tag: str) -> "EntryKind":
        try:
            return _FROM_TEXT[tag]
        except KeyError:
            raise ValueError(f"unknown entry kind tag {tag!r}") from None


_TEXT_TAGS = {
    EntryKind.EXEC: "exec",
    EntryKind.MODULE_INSERT: "insmod",
    EntryKind.MODULE_REMOVE: "rmmod",
    EntryKind.SIGNAL: "signal",
}
_FROM_TEXT = {v: k for k, v in _TEXT_TAGS.items()}


class EntryId(bytes):
    """A 32-byte whitelist key. Plain ``bytes`` underneath so dict lookups stay cheap."""

    def __new__(cls, digest: bytes) -> "EntryId":
        if len(digest) != DIGEST_SIZE:
            raise ValueError(f"EntryId must be {DIGEST_SIZE} bytes, got {len(digest)}")
        return super().__new__(cls, digest)

    @classmethod
    def fromhex(cls, text: str) -> "EntryId":  # type: ignore[override]
        if len(text) != 2 * DIGEST_SIZE:
            raise ValueError(f"expected {2 * DIGEST_SIZE} hex chars, got {len(text)}")
        return cls(bytes.fromhex(text))

    def __repr__(self) -> str:
        return f"EntryId({self.hex()[:16]}...)"

    def __str__(self) -> str:
        return self.hex()


@dataclass(frozen=True)
class DigestInput:
    kind: EntryKind
    program_bytes: bytes
    program_path: str | bytes
    extra: bytes | None = None


def _path_bytes(path: str | bytes) -> bytes:
    try:
        if isinstance(path, str):
            raw = path.encode("utf-8")
        else:
            raw = bytes(path)
            raw.decode("utf-8")
    except UnicodeError as exc:
        raise InvalidPath(f"path is not valid UTF-8: {path!r}") from exc
    if not raw:
        raise InvalidPath("path must be non-empty")
    return raw


def _field(data: bytes) -> bytes:
    return struct.pack(">Q", len(data)) + data


def encode_digest_input(inp: DigestInput) -> bytes:
    """The exact byte string that gets hashed for ``inp``."""
    if inp.kind is not EntryKind.EXEC and inp.extra is None:
        raise MissingContext(f"{inp.kind.name} entries need context data")
    extra = inp.extra if inp.kind is not EntryKind.EXEC and inp.extra is not None else b""
    return (
        bytes([inp.kind.value])
        + _field(bytes(inp.program_bytes))
        + _field(_path_bytes(inp.program_path))
        + _field(bytes(extra))
    )


def compute_entry_id(inp: DigestInput) -> EntryId:
    return EntryId(hashlib.sha256(encode_digest_input(inp)).digest())


def exec_id(program_bytes: bytes, path: str) -> EntryId:
    return compute_entry_id(DigestInput(EntryKind.EXEC, program_bytes, path))


def signal_descriptor(sender_path: str, signal_number: int, target_path: str) -> bytes:
    """Canonical ``u32be len || sender || u8 signal || u32be len || target``."""
    if not isinstance(signal_number, int) or not 1 <= signal_number <= MAX_SIGNAL:
        raise InvalidSignal(f"signal number must be in [1, {MAX_SIGNAL}], got {signal_number!r}")
    sender = _path_bytes(sender_path)
    target = _path_bytes(target_path)
    return (
        struct.pack(">I", len(sender)) + sender
        + bytes([signal_number])
        + struct.pack(">I", len(target)) + target
    )


def decode_signal_descriptor(blob: bytes) -> tuple[str, int, str]:
    try:
        (n,) = struct.unpack_from(">I", blob, 0)
        sender = blob[4:4 + n]
        pos = 4 + n
        signal = blob[pos]
        (m,) = struct.unpack_from(">I", blob, pos + 1)
        target = blob[pos + 5:pos + 5 + m]
    except (struct.error, IndexError) as exc:
        raise DigestError("truncated signal descriptor") from exc
    if len(sender) != n or len(target) != m or pos + 5 + m != len(blob):
        raise DigestError("malformed signal descriptor")
    return sender.decode("utf-8"), signal, target.decode("utf-8")
