"""The policy engine: profiling/enforcing state machine and per-event decisions."""

from __future__ import annotations

import enum
import errno
import threading
from dataclasses import dataclass
from typing import Callable, MutableMapping, Union

from .commands import CommandCode, VerifiedCommand
from .digest import DigestInput, EntryId, EntryKind, compute_entry_id, signal_descriptor
from .whitelist import EntryMeta, Whitelist

DEFAULT_QUIET_PERIOD_MS = 3_600_000


class EngineError(Exception):
    pass


class UnresolvedBinary(EngineError):
    pass


class MissingProtectedFile(EngineError):
    pass


class WrongMode(EngineError):
    pass


class Mode(enum.Enum):
    PROFILING = "profiling"
    ENFORCING = "enforcing"
    STOPPED = "stopped"


@dataclass(frozen=True)
class Exec:
    path: str
    args: tuple[str, ...] = ()
    binary: bytes | None = None


@dataclass(frozen=True)
class Kill:
    sender_path: str
    signal: int
    target_path: str
    binary: bytes | None = None  # sender's executable


@dataclass(frozen=True)
class InsertModule:
    path: str  # the insmod tool
    lkm_name: str
    lkm_bytes: bytes
    binary: bytes | None = None


@dataclass(frozen=True)
class RemoveModule:
    path: str  # the rmmod tool
    lkm_name: str
    binary: bytes | None = None


@dataclass(frozen=True)
class Reboot:
    pass


Action = Union[Exec, Kill, InsertModule, RemoveModule, Reboot]


@dataclass(frozen=True)
class DeviceEvent:
    seq: int
    t: int
    action: Action


class Verdict(enum.Enum):
    ALLOW = "ALLOW"
    DENY = "DENY"


class Reason(enum.Enum):
    WHITELISTED = "whitelisted"
    PROFILED = "profiled"
    NOT_WHITELISTED = "not-whitelisted"
    PROTECTION_OFF = "protection-off"
    REBOOT = "reboot"


@dataclass(frozen=True)
class Decision:
    seq: int
    verdict: Verdict
    kind: str
    entry_id: EntryId | None
    reason: Reason
    code: int | None = None  # errno returned to the caller on denial

    @property
    def denied(self) -> bool:
        return self.verdict is Verdict.DENY

    def log_line(self) -> str:
        verdict = self.verdict.value
        if self.code is not None:
            verdict += ":" + errno.errorcode[self.code]
        eid = self.entry_id.hex() if self.entry_id is not None else "-"
        return f"{self.seq} {verdict} {self.kind} {eid} {self.reason.value}"


@dataclass(frozen=True)
class Report:
    seq: int
    entry_id: EntryId
    kind: EntryKind
    reason: str
    origin: str


@dataclass
class EngineConfig:
    engine_binary_path: str
    init_script_path: str
    quiet_period: int = DEFAULT_QUIET_PERIOD_MS
    device_id: str = "device"

    @property
    def protected_paths(self) -> tuple[str, str]:
        return (self.engine_binary_path, self.init_script_path)


@dataclass
class EngineState:
    mode: Mode
    whitelist: Whitelist
    shadow_files: dict[str, bytes]
    last_insert_time: int = 0
    now: int = 0
    last_seq: int = 0
    replay_counter: int = 0
    resume_mode: Mode = Mode.ENFORCING


def entry_for(action: Action) -> tuple[EntryKind, EntryId, str]:
    """(kind, id, label) of the whitelist entry an action is checked against."""
    binary = getattr(action, "binary", None)
    if binary is None:
        raise UnresolvedBinary(f"no executable bytes for {action!r}")
    if isinstance(action, Exec):
        kind, inp, label = EntryKind.EXEC, DigestInput(EntryKind.EXEC, binary, action.path), action.path
    elif isinstance(action, Kill):
        kind = EntryKind.SIGNAL
        extra = signal_descriptor(action.sender_path, action.signal, action.target_path)
        inp = DigestInput(kind, binary, action.sender_path, extra)
        label = f"{action.sender_path} sig{action.signal} {action.target_path}"
    elif isinstance(action, InsertModule):
        kind = EntryKind.MODULE_INSERT
        inp = DigestInput(kind, binary, action.path, action.lkm_bytes)
        label = f"{action.path} {action.lkm_name}"
    elif isinstance(action, RemoveModule):
        kind = EntryKind.MODULE_REMOVE
        inp = DigestInput(kind, binary, action.path, action.lkm_name.encode("utf-8"))
        label = f"{action.path} {action.lkm_name}"
    else:
        raise TypeError(f"not an interceptable action: {action!r}")
    return kind, compute_entry_id(inp), label


class Engine:
    """Decision core bound to a device filesystem.

    ``fs`` is the device's mutable path -> bytes mapping; the engine only writes
    to it when restoring protected files on reboot.
    """

    def __init__(self, fs: MutableMapping[str, bytes], config: EngineConfig, state: EngineState):
        self.fs = fs
        self.config = config
        self.state = state
        self.lock = threading.RLock()
        self.report_sink: Callable[[Report], None] | None = None
        self.audit: list[VerifiedCommand] = []

    @property
    def mode(self) -> Mode:
        return self.state.mode

    @property
    def whitelist(self) -> Whitelist:
        return self.state.whitelist

    def handle_event(self, ev: DeviceEvent) -> tuple[Decision, Report | None]:
        with self.lock:
            st = self.state
            st.now = max(st.now, ev.t)
            st.last_seq = ev.seq
            if isinstance(ev.action, Reboot):
                self._restore_protected()
                return Decision(ev.seq, Verdict.ALLOW, "reboot", None, Reason.REBOOT), None

            kind, entry_id, label = entry_for(ev.action)
            if st.mode is Mode.PROFILING:
                if st.whitelist.insert(entry_id, EntryMeta(kind, label, ev.seq)):
                    st.last_insert_time = ev.t
                return Decision(ev.seq, Verdict.ALLOW, kind.tag, entry_id, Reason.PROFILED), None
            if st.mode is Mode.STOPPED:
                return Decision(ev.seq, Verdict.ALLOW, kind.tag, entry_id, Reason.PROTECTION_OFF), None
            if st.whitelist.contains(entry_id):
                return Decision(ev.seq, Verdict.ALLOW, kind.tag, entry_id, Reason.WHITELISTED), None

            code = errno.EPERM if kind is EntryKind.SIGNAL else errno.ENOSYS
            decision = Decision(ev.seq, Verdict.DENY, kind.tag, entry_id, Reason.NOT_WHITELISTED, code)
            report = Report(ev.seq, entry_id, kind, Reason.NOT_WHITELISTED.value, self.config.device_id)
            if self.report_sink is not None:
                self.report_sink(report)
            return decision, report

    def _restore_protected(self) -> None:
        for path, data in self.state.shadow_files.items():
            self.fs[path] = data

    def quiet_timer(self, now: int | None = None) -> int:
        """Logical time left before the quiet period expires."""
        now = self.state.now if now is None else now
        return max(0, self.config.quiet_period - (now - self.state.last_insert_time))

    def profiling_complete(self, now: int | None = None) -> bool:
        if self.state.mode is not Mode.PROFILING:
            raise WrongMode(f"engine is {self.state.mode.value}, not profiling")
        return self.quiet_timer(now) == 0

    def finish_bootstrap(self, now: int | None = None) -> None:
        """Second bootstrap stage: switch to enforcing once the profile is stable."""
        with self.lock:
            if not self.profiling_complete(now):
                raise WrongMode("profiling quiet period has not elapsed")
            self.state.mode = Mode.ENFORCING

    def apply_command(self, vc: VerifiedCommand) -> None:
        with self.lock:
            st, cmd = self.state, vc.command
            if cmd.code is CommandCode.STOP:
                if st.mode is not Mode.STOPPED:
                    st.resume_mode = st.mode
                    st.mode = Mode.STOPPED
            elif cmd.code is CommandCode.START:
                if st.mode is Mode.STOPPED:
                    st.mode = st.resume_mode
            elif cmd.code is CommandCode.PROFILE:
                st.mode = Mode.PROFILING
                st.last_insert_time = st.now
            elif cmd.code is CommandCode.PROTECT:
                st.mode = Mode.ENFORCING
            elif cmd.code is CommandCode.ADD_ENTRY:
                st.whitelist.insert(cmd.entry_id, EntryMeta(cmd.kind, cmd.label, st.last_seq))
            elif cmd.code is CommandCode.REMOVE_ENTRY:
                st.whitelist.remove(cmd.entry_id)
            self.audit.append(vc)


def bootstrap(
    fs: MutableMapping[str, bytes],
    config: EngineConfig,
    whitelist: Whitelist | None = None,
    now: int = 0,
    mode: Mode = Mode.PROFILING,
) -> Engine:
    """First bootstrap stage: snapshot protected files and start profiling.

    ``mode`` lets a device that already has a whitelist start straight in
    enforcing mode.
    """
    shadow = {}
    for path in config.protected_paths:
        if path not in fs:
            raise MissingProtectedFile(path)
        shadow[path] = bytes(fs[path])
    state = EngineState(
        mode=mode,
        whitelist=whitelist if whitelist is not None else Whitelist(),
        shadow_files=shadow,
        last_insert_time=now,
        now=now,
    )
    return Engine(fs, config, state)
