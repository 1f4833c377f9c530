"""Virtual IoT device: filesystem image, trace files, and the replay loop.

Fixture layout::

    <device>/image.toml          [device] metadata + [files] path -> blob name
    <device>/blobs/<name>        raw file contents
    <device>/traces/<name>.trace JSON lines (header first, then one record per line)
    <device>/scenarios/<name>.expect

Trace records carry ``t`` (integer ms from trace start) and ``kind``:

=========  ============================================  =====================
kind       fields                                        engine sees it
=========  ============================================  =====================
exec       path, args                                    Exec
kill       sender, signal, target                        Kill
insmod     path, lkm_name, file_ref | inline_b64         InsertModule
rmmod      path, lkm_name                                RemoveModule
reboot     -                                             Reboot + boot execs
write      path, file_ref | inline_b64                   no (filesystem only)
delete     path                                          no (filesystem only)
=========  ============================================  =====================

Lines starting with ``#`` are comments. Only engine-visible events get a
``seq``; numbering restarts at 1 for every replayed trace and includes the boot
execs injected after a reboot.
"""

from __future__ import annotations

import base64
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .engine import (
    DEFAULT_QUIET_PERIOD_MS,
    Decision,
    DeviceEvent,
    Engine,
    EngineConfig,
    Exec,
    InsertModule,
    Kill,
    Mode,
    Reboot,
    RemoveModule,
    Report,
    bootstrap,
)
from .whitelist import Whitelist

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

FIXTURES_ROOT = Path(__file__).parent / "fixtures"
FS_ONLY = ("write", "delete")
RECORD_KINDS = ("exec", "kill", "insmod", "rmmod", "reboot") + FS_ONLY


class SimError(Exception):
    pass


class TraceFormatError(SimError):
    pass


class TraceResolutionError(SimError):
    pass


@dataclass
class DeviceImage:
    name: str
    files: dict[str, bytes]
    init_script_path: str
    engine_binary_path: str
    boot_exec_list: list[str]
    description: str = ""
    root: Path | None = None

    def __post_init__(self):
        for p in (self.init_script_path, self.engine_binary_path):
            if p not in self.files:
                raise SimError(f"{self.name}: protected path {p} missing from image")

    def trace_path(self, name: str) -> Path:
        return self.root / "traces" / (name if name.endswith(".trace") else f"{name}.trace")


def load_image(device_dir: str | Path) -> DeviceImage:
    device_dir = Path(device_dir)
    with open(device_dir / "image.toml", "rb") as fh:
        manifest = tomllib.load(fh)
    dev = manifest["device"]
    blobs = device_dir / "blobs"
    files = {path: (blobs / ref).read_bytes() for path, ref in manifest.get("files", {}).items()}
    return DeviceImage(
        name=dev["name"],
        files=files,
        init_script_path=dev["init_script"],
        engine_binary_path=dev["engine_binary"],
        boot_exec_list=list(dev.get("boot_exec", [])),
        description=dev.get("description", ""),
        root=device_dir,
    )


@dataclass(frozen=True)
class TraceRecord:
    t: int
    kind: str
    path: str | None = None
    args: tuple[str, ...] = ()
    sender: str | None = None
    signal: int | None = None
    target: str | None = None
    lkm_name: str | None = None
    data: bytes | None = None

    @property
    def engine_visible(self) -> bool:
        return self.kind not in FS_ONLY


@dataclass
class Trace:
    device: str
    description: str
    records: list[TraceRecord]
    duration: int = 0

    def __post_init__(self):
        last = 0
        for rec in self.records:
            if rec.t < last:
                raise TraceFormatError(f"timestamps go backwards at t={rec.t}")
            last = rec.t
        if not self.duration:
            self.duration = last + 1 if self.records else 0


def _parse_record(obj: dict, blob_dir: Path | None, where: str) -> TraceRecord:
    kind = obj.get("kind")
    if kind not in RECORD_KINDS:
        raise TraceFormatError(f"{where}: unknown kind {kind!r}")
    data = None
    if "inline_b64" in obj:
        try:
            data = base64.b64decode(obj["inline_b64"], validate=True)
        except ValueError as exc:
            raise TraceFormatError(f"{where}: bad inline_b64") from exc
    elif "file_ref" in obj:
        if blob_dir is None:
            raise TraceFormatError(f"{where}: file_ref without a blob directory")
        ref = blob_dir / obj["file_ref"]
        if not ref.is_file():
            raise TraceFormatError(f"{where}: missing blob {obj['file_ref']}")
        data = ref.read_bytes()
    required = {
        "exec": ("path",),
        "kill": ("sender", "signal", "target"),
        "insmod": ("path", "lkm_name"),
        "rmmod": ("path", "lkm_name"),
        "write": ("path",),
        "delete": ("path",),
        "reboot": (),
    }[kind]
    missing = [f for f in required if f not in obj]
    if missing or (kind in ("insmod", "write") and data is None):
        raise TraceFormatError(f"{where}: {kind} record missing {missing or ['file_ref|inline_b64']}")
    try:
        t = int(obj["t"])
    except (KeyError, TypeError, ValueError):
        raise TraceFormatError(f"{where}: missing or non-integer t") from None
    return TraceRecord(
        t=t,
        kind=kind,
        path=obj.get("path"),
        args=tuple(obj.get("args", ())),
        sender=obj.get("sender"),
        signal=obj.get("signal"),
        target=obj.get("target"),
        lkm_name=obj.get("lkm_name"),
        data=data,
    )


def parse_trace(lines: Iterable[str], blob_dir: Path | None = None, source: str = "<trace>") -> Trace:
    header = None
    records = []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"{source}:{lineno}: {exc}") from exc
        if header is None:
            if "kind" in obj:
                raise TraceFormatError(f"{source}:{lineno}: first record must be the header")
            header = obj
            continue
        records.append(_parse_record(obj, blob_dir, f"{source}:{lineno}"))
    if header is None:
        raise TraceFormatError(f"{source}: empty trace")
    return Trace(header.get("device", ""), header.get("description", ""), records, int(header.get("duration", 0)))


def load_trace(path: str | Path, blob_dir: Path | None = None) -> Trace:
    path = Path(path)
    if blob_dir is None:
        candidate = path.parent.parent / "blobs"
        blob_dir = candidate if candidate.is_dir() else None
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh, blob_dir, str(path))


def repeat_trace(trace: Trace, duration: int) -> Trace:
    """Cycle ``trace`` back to back until ``duration`` ms are covered."""
    period = trace.duration
    if period <= 0:
        return Trace(trace.device, trace.description, [], duration)
    records = []
    for k in range(math.ceil(duration / period)):
        for rec in trace.records:
            t = rec.t + k * period
            if t < duration:
                records.append(TraceRecord(**{**rec.__dict__, "t": t}))
    return Trace(trace.device, trace.description, records, duration)


@dataclass
class ReplayResult:
    decisions: list[Decision] = field(default_factory=list)
    reports: list[Report] = field(default_factory=list)

    @property
    def denials(self) -> list[Decision]:
        return [d for d in self.decisions if d.denied]

    def log_text(self) -> str:
        return "".join(d.log_line() + "\n" for d in self.decisions)


class VirtualDevice:
    """A device image plus its live filesystem, logical clock and engine."""

    def __init__(self, image: DeviceImage, quiet_period: int = DEFAULT_QUIET_PERIOD_MS):
        self.image = image
        self.fs: dict[str, bytes] = dict(image.files)
        self.config = EngineConfig(
            engine_binary_path=image.engine_binary_path,
            init_script_path=image.init_script_path,
            quiet_period=quiet_period,
            device_id=image.name,
        )
        self.engine: Engine | None = None
        self.clock = 0

    def bootstrap(self, whitelist: Whitelist | None = None, mode: Mode = Mode.PROFILING) -> Engine:
        self.engine = bootstrap(self.fs, self.config, whitelist, now=self.clock, mode=mode)
        return self.engine

    def _resolve(self, path: str) -> bytes:
        try:
            return self.fs[path]
        except KeyError:
            raise TraceResolutionError(f"{path} does not exist on {self.image.name}") from None

    def _actions(self, rec: TraceRecord):
        if rec.kind == "exec":
            return [Exec(rec.path, rec.args, self._resolve(rec.path))]
        if rec.kind == "kill":
            return [Kill(rec.sender, int(rec.signal), rec.target, self._resolve(rec.sender))]
        if rec.kind == "insmod":
            return [InsertModule(rec.path, rec.lkm_name, rec.data, self._resolve(rec.path))]
        if rec.kind == "rmmod":
            return [RemoveModule(rec.path, rec.lkm_name, self._resolve(rec.path))]
        return [Reboot()]

    def replay(self, trace: Trace) -> ReplayResult:
        """Feed ``trace`` to the engine, starting at the device's current clock."""
        if self.engine is None:
            raise SimError("device not bootstrapped")
        result = ReplayResult()
        base = self.clock
        seq = 0
        for rec in trace.records:
            now = base + rec.t
            self.clock = now
            if rec.kind == "write":
                self.fs[rec.path] = rec.data
                continue
            if rec.kind == "delete":
                self.fs.pop(rec.path, None)
                continue
            for action in self._actions(rec):
                seq += 1
                self._deliver(DeviceEvent(seq, now, action), result)
            if rec.kind == "reboot":
                for path in self.image.boot_exec_list:
                    seq += 1
                    self._deliver(DeviceEvent(seq, now, Exec(path, (), self._resolve(path))), result)
        self.clock = base + trace.duration
        return result

    def _deliver(self, ev: DeviceEvent, result: ReplayResult) -> None:
        decision, report = self.engine.handle_event(ev)
        result.decisions.append(decision)
        if report is not None:
            result.reports.append(report)

    def reboot(self) -> ReplayResult:
        return self.replay(Trace(self.image.name, "reboot", [TraceRecord(0, "reboot")], 1))

    def advance(self, ms: int) -> None:
        self.clock += ms

    def profile(self, traces: Iterable[Trace], with_reboot: bool = True) -> ReplayResult:
        """Bootstrap, profile (boot + traces), wait out the quiet period, enforce."""
        engine = self.bootstrap()
        result = ReplayResult()
        if with_reboot:
            _extend(result, self.reboot())
        for trace in traces:
            _extend(result, self.replay(trace))
        self.clock = max(self.clock, engine.state.last_insert_time + self.config.quiet_period)
        engine.finish_bootstrap(self.clock)
        return result


def _extend(into: ReplayResult, other: ReplayResult) -> None:
    into.decisions.extend(other.decisions)
    into.reports.extend(other.reports)


def replay(image: DeviceImage, trace: Trace, engine: Engine) -> ReplayResult:
    """Replay ``trace`` against an existing engine bound to ``image``'s filesystem."""
    dev = VirtualDevice(image, engine.config.quiet_period)
    dev.fs = engine.fs  # type: ignore[assignment]
    dev.engine = engine
    dev.clock = engine.state.now
    return dev.replay(trace)


def profile_experiment(image: DeviceImage, benign_trace: Trace, durations: list[int]) -> dict[int, int]:
    """Whitelist size after profiling ``benign_trace`` (cycled) for each duration.

    Boot-time programs are left out, so each run starts from an empty whitelist
    without a reboot.
    """
    if list(durations) != sorted(durations):
        raise ValueError("durations must be ascending")
    sizes = {}
    for d in durations:
        dev = VirtualDevice(image)
        dev.bootstrap()
        dev.replay(repeat_trace(benign_trace, d))
        sizes[d] = len(dev.engine.whitelist)
    return sizes
