"""Whitelist-based process execution guard for IoT devices.

Modules: ``digest`` (entry identifiers), ``whitelist`` (store and file format),
``engine`` (profiling/enforcing decisions), ``ots`` (Lamport + Merkle
signatures), ``protocol`` (signed control channel and reports), ``sim`` and
``scenarios`` (virtual device and attack replays), ``cli``.
"""

from .digest import DigestInput, EntryId, EntryKind, compute_entry_id, signal_descriptor
from .engine import Decision, DeviceEvent, Engine, EngineConfig, Mode, bootstrap
from .whitelist import EntryMeta, Whitelist

__all__ = [
    "DigestInput",
    "EntryId",
    "EntryKind",
    "compute_entry_id",
    "signal_descriptor",
    "Decision",
    "DeviceEvent",
    "Engine",
    "EngineConfig",
    "Mode",
    "bootstrap",
    "EntryMeta",
    "Whitelist",
]
