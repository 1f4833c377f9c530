"""Attack scenario runner.

An ``.expect`` file is a JSON object::

    {"name": ..., "summary": ..., "profile": ["idle", "interaction"],
     "attack": "attack-trace-name", "expected_denial_seqs": [...],
     "expected_first_denial": n, "expected_allowed_seqs": [...]}

The device is profiled on the listed benign traces (plus a reboot), switched to
enforcing, and the attack trace is replayed. Seqs refer to the attack replay.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .engine import Engine
from .sim import FIXTURES_ROOT, ReplayResult, VirtualDevice, load_image, load_trace


class UnknownScenario(KeyError):
    pass


@dataclass(frozen=True)
class ScenarioExpectation:
    name: str
    device_dir: Path
    profile: tuple[str, ...]
    attack: str
    expected_denial_seqs: tuple[int, ...]
    expected_first_denial: int
    expected_allowed_seqs: tuple[int, ...] = ()
    summary: str = ""

    @classmethod
    def load(cls, path: Path) -> "ScenarioExpectation":
        obj = json.loads(path.read_text(encoding="utf-8"))
        if not obj["expected_denial_seqs"]:
            raise ValueError(f"{path}: attack scenarios need at least one expected denial")
        return cls(
            name=obj["name"],
            device_dir=path.parent.parent,
            profile=tuple(obj["profile"]),
            attack=obj["attack"],
            expected_denial_seqs=tuple(obj["expected_denial_seqs"]),
            expected_first_denial=int(obj["expected_first_denial"]),
            expected_allowed_seqs=tuple(obj.get("expected_allowed_seqs", ())),
            summary=obj.get("summary", ""),
        )


@dataclass
class ScenarioResult:
    name: str
    device: str
    expectation: ScenarioExpectation
    replay: ReplayResult = field(repr=False)

    @property
    def denied_seqs(self) -> list[int]:
        return [d.seq for d in self.replay.denials]

    @property
    def first_denial(self) -> int | None:
        seqs = self.denied_seqs
        return seqs[0] if seqs else None

    @property
    def detected(self) -> bool:
        denied = set(self.denied_seqs)
        exp = self.expectation
        return (
            self.first_denial is not None
            and self.first_denial <= exp.expected_first_denial
            and denied.issuperset(exp.expected_denial_seqs)
            and denied.isdisjoint(exp.expected_allowed_seqs)
        )


def list_scenarios(root: Path = FIXTURES_ROOT) -> dict[str, Path]:
    found = {}
    for path in sorted(root.glob("*/scenarios/*.expect")):
        found[path.stem] = path
    return found


def run_scenario(
    name: str,
    root: Path = FIXTURES_ROOT,
    preload: Callable[[Engine, VirtualDevice], None] | None = None,
) -> ScenarioResult:
    """Profile the scenario's device, then replay its attack trace in enforcing mode.

    ``preload`` runs after profiling and before the attack; tests use it to
    tamper with the whitelist (e.g. to whitelist the attack binary).
    """
    scenarios = list_scenarios(root)
    if name not in scenarios:
        raise UnknownScenario(name)
    exp = ScenarioExpectation.load(scenarios[name])
    image = load_image(exp.device_dir)
    dev = VirtualDevice(image)
    dev.profile([load_trace(image.trace_path(t)) for t in exp.profile])
    if preload is not None:
        preload(dev.engine, dev)
    result = dev.replay(load_trace(image.trace_path(exp.attack)))
    return ScenarioResult(name, image.name, exp, result)


def run_all(root: Path = FIXTURES_ROOT) -> list[ScenarioResult]:
    return [run_scenario(name, root) for name in list_scenarios(root)]


def format_table(results: list[ScenarioResult]) -> str:
    rows = [("scenario", "device", "expected<=", "first", "denials", "result")]
    for r in results:
        rows.append(
            (
                r.name,
                r.device,
                str(r.expectation.expected_first_denial),
                str(r.first_denial) if r.first_denial is not None else "-",
                ",".join(map(str, r.denied_seqs)) or "-",
                "DETECTED" if r.detected else "FAIL",
            )
        )
    widths = [max(len(row[c]) for row in rows) for c in range(len(rows[0]))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    detected = sum(r.detected for r in results)
    lines.append(f"detected {detected}/{len(results)}")
    return "\n".join(lines) + "\n"
