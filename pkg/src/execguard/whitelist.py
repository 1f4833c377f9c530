"""Hash-table whitelist and its text file format.

File layout::

    HADESWL v1
    <kind-tag> <64-hex-digest> <added_at> <label>
    ...

Labels run to the end of the line and may contain spaces but not newlines.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Iterator

from .digest import EntryId, EntryKind

MAGIC = "HADESWL"
FORMAT_VERSION = 1


class WhitelistError(Exception):
    pass


class FormatError(WhitelistError):
    pass


class CorruptEntry(WhitelistError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True)
class EntryMeta:
    kind: EntryKind
    label: str
    added_at: int = 0

    def __post_init__(self):
        if not self.label:
            raise ValueError("label must be non-empty")
        if "\n" in self.label or "\r" in self.label:
            raise ValueError("label must be a single line")


class Whitelist:
    """Set of EntryIds with first-insert-wins metadata."""

    version = FORMAT_VERSION

    def __init__(self):
        self._entries: dict[EntryId, EntryMeta] = {}

    def insert(self, entry_id: EntryId, meta: EntryMeta) -> bool:
        """Add ``entry_id``; returns False if it was already present (meta unchanged)."""
        if entry_id in self._entries:
            return False
        self._entries[EntryId(entry_id)] = meta
        return True

    def contains(self, entry_id: bytes) -> bool:
        return entry_id in self._entries

    __contains__ = contains

    def remove(self, entry_id: bytes) -> bool:
        return self._entries.pop(entry_id, None) is not None

    def meta(self, entry_id: bytes) -> EntryMeta:
        return self._entries[entry_id]

    def items(self) -> Iterator[tuple[EntryId, EntryMeta]]:
        return iter(self._entries.items())

    def copy(self) -> "Whitelist":
        clone = Whitelist()
        clone._entries = dict(self._entries)
        return clone

    def count(self, kind: EntryKind | None = None) -> int:
        if kind is None:
            return len(self._entries)
        return sum(1 for m in self._entries.values() if m.kind is kind)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[EntryId]:
        return iter(self._entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, Whitelist) and self._entries == other._entries

    def __repr__(self) -> str:
        return f"<Whitelist {len(self)} entries>"


def save(wl: Whitelist, sink: IO[str]) -> None:
    sink.write(f"{MAGIC} v{FORMAT_VERSION}\n")
    for entry_id, meta in wl.items():
        sink.write(f"{meta.kind.tag} {entry_id.hex()} {meta.added_at} {meta.label}\n")


def load(source: IO[str]) -> Whitelist:
    header = source.readline().rstrip("\n")
    if header != f"{MAGIC} v{FORMAT_VERSION}":
        raise FormatError(f"bad whitelist header {header!r}")
    wl = Whitelist()
    for lineno, line in enumerate(source, start=2):
        line = line.rstrip("\n")
        if not line:
            continue
        parts = line.split(" ", 3)
        if len(parts) != 4:
            raise CorruptEntry(lineno, "expected '<kind> <digest> <added_at> <label>'")
        tag, hexdigest, added_at, label = parts
        try:
            kind = EntryKind.from_tag(tag)
            entry_id = EntryId.fromhex(hexdigest)
            meta = EntryMeta(kind, label, int(added_at))
        except ValueError as exc:
            raise CorruptEntry(lineno, str(exc)) from exc
        wl.insert(entry_id, meta)
    return wl


def save_path(wl: Whitelist, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        save(wl, fh)


def load_path(path) -> Whitelist:
    with open(path, encoding="utf-8", newline="\n") as fh:
        return load(fh)
