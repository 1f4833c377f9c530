"""Owner commands and their canonical byte encoding (the bytes that get signed)."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from .digest import DIGEST_SIZE, EntryId, EntryKind


class CommandCode(enum.IntEnum):
    STOP = 1
    START = 2
    PROFILE = 3
    PROTECT = 4
    ADD_ENTRY = 5
    REMOVE_ENTRY = 6


class CommandDecodeError(ValueError):
    pass


@dataclass(frozen=True)
class Command:
    code: CommandCode
    entry_id: EntryId | None = None
    kind: EntryKind | None = None
    label: str | None = None

    def __post_init__(self):
        needs_id = self.code in (CommandCode.ADD_ENTRY, CommandCode.REMOVE_ENTRY)
        if needs_id != (self.entry_id is not None):
            raise ValueError(f"{self.code.name} {'requires' if needs_id else 'takes no'} entry id")
        if self.code is CommandCode.ADD_ENTRY and (self.kind is None or not self.label):
            raise ValueError("ADD_ENTRY requires kind and label")
        if self.code is not CommandCode.ADD_ENTRY and (self.kind is not None or self.label is not None):
            raise ValueError(f"{self.code.name} takes no kind/label")

    def encode(self) -> bytes:
        out = bytes([self.code])
        if self.entry_id is not None:
            out += bytes(self.entry_id)
        if self.code is CommandCode.ADD_ENTRY:
            label = self.label.encode("utf-8")
            out += bytes([self.kind.value]) + struct.pack(">H", len(label)) + label
        return out

    @classmethod
    def decode(cls, blob: bytes) -> "Command":
        if not blob:
            raise CommandDecodeError("empty command")
        try:
            code = CommandCode(blob[0])
        except ValueError:
            raise CommandDecodeError(f"unknown command code {blob[0]}") from None
        rest = blob[1:]
        try:
            if code is CommandCode.REMOVE_ENTRY:
                if len(rest) != DIGEST_SIZE:
                    raise CommandDecodeError("bad REMOVE_ENTRY length")
                return cls(code, EntryId(rest))
            if code is CommandCode.ADD_ENTRY:
                if len(rest) < DIGEST_SIZE + 3:
                    raise CommandDecodeError("truncated ADD_ENTRY")
                entry_id = EntryId(rest[:DIGEST_SIZE])
                kind = EntryKind(rest[DIGEST_SIZE])
                (n,) = struct.unpack_from(">H", rest, DIGEST_SIZE + 1)
                label = rest[DIGEST_SIZE + 3:]
                if len(label) != n:
                    raise CommandDecodeError("bad ADD_ENTRY label length")
                return cls(code, entry_id, kind, label.decode("utf-8"))
            if rest:
                raise CommandDecodeError(f"trailing bytes after {code.name}")
            return cls(code)
        except CommandDecodeError:
            raise
        except ValueError as exc:  # includes UnicodeDecodeError, bad EntryKind
            raise CommandDecodeError(str(exc)) from exc


@dataclass(frozen=True)
class VerifiedCommand:
    """A command whose signature and leaf index have been checked."""

    command: Command
    leaf_index: int


STOP = Command(CommandCode.STOP)
START = Command(CommandCode.START)
PROFILE = Command(CommandCode.PROFILE)
PROTECT = Command(CommandCode.PROTECT)


def add_entry(entry_id: EntryId, kind: EntryKind, label: str) -> Command:
    return Command(CommandCode.ADD_ENTRY, EntryId(entry_id), kind, label)


def remove_entry(entry_id: EntryId) -> Command:
    return Command(CommandCode.REMOVE_ENTRY, EntryId(entry_id))


def parse_command(words: list[str]) -> Command:
    """Parse CLI words like ``["protect"]`` or ``["add", "exec", HEX, "label..."]``."""
    if not words:
        raise ValueError("missing command")
    name, args = words[0].lower(), words[1:]
    simple = {"stop": STOP, "start": START, "profile": PROFILE, "protect": PROTECT}
    if name in simple:
        if args:
            raise ValueError(f"{name} takes no arguments")
        return simple[name]
    if name == "add":
        if len(args) < 3:
            raise ValueError("usage: add <kind> <hex-id> <label>")
        return add_entry(EntryId.fromhex(args[1]), EntryKind.from_tag(args[0]), " ".join(args[2:]))
    if name == "remove":
        if len(args) != 1:
            raise ValueError("usage: remove <hex-id>")
        return remove_entry(EntryId.fromhex(args[0]))
    raise ValueError(f"unknown command {name!r}")
