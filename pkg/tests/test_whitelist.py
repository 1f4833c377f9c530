import io
import os

import pytest
from hypothesis import given, strategies as st
from hypothesis.stateful import RuleBasedStateMachine, invariant, rule

from execguard import whitelist as wlio
from execguard.digest import EntryId, EntryKind
from execguard.sim import VirtualDevice, load_image, load_trace
from execguard.whitelist import CorruptEntry, EntryMeta, FormatError, Whitelist
from oracles import ref_count_trace_entries

ids = st.binary(min_size=32, max_size=32).map(EntryId)
labels = st.text(st.characters(blacklist_characters="\r\n", blacklist_categories=("Cs",)), min_size=1, max_size=30)


def meta(label="x", kind=EntryKind.EXEC):
    return EntryMeta(kind, label)


@given(ids)
def test_insert_idempotent(eid):
    wl = Whitelist()
    assert wl.insert(eid, meta("first"))
    assert not wl.insert(eid, meta("second"))
    assert len(wl) == 1
    assert wl.meta(eid).label == "first"


class WhitelistModel(RuleBasedStateMachine):
    """Checks the whitelist against a plain Python set."""

    def __init__(self):
        super().__init__()
        self.wl = Whitelist()
        self.model = set()

    @rule(eid=ids)
    def insert(self, eid):
        assert self.wl.insert(eid, meta()) == (eid not in self.model)
        self.model.add(eid)

    @rule(eid=ids)
    def remove(self, eid):
        assert self.wl.remove(eid) == (eid in self.model)
        self.model.discard(eid)

    @rule(eid=ids)
    def lookup(self, eid):
        assert (eid in self.wl) == (eid in self.model)

    @invariant()
    def same_contents(self):
        assert set(self.wl) == self.model
        assert len(self.wl) == len(self.model)


TestWhitelistModel = WhitelistModel.TestCase


def _roundtrip(wl):
    buf = io.StringIO()
    wlio.save(wl, buf)
    buf.seek(0)
    return wlio.load(buf)


def test_empty_roundtrip():
    assert _roundtrip(Whitelist()) == Whitelist()


def test_large_roundtrip(tmp_path):
    wl = Whitelist()
    kinds = list(EntryKind)
    for i in range(1000):
        wl.insert(EntryId(os.urandom(32)), EntryMeta(kinds[i % 4], f"/bin/prog {i} with spaces", i))
    path = tmp_path / "wl.txt"
    wlio.save_path(wl, path)
    back = wlio.load_path(path)
    assert back == wl
    assert [back.meta(e) for e in back] == [wl.meta(e) for e in wl]


@given(st.lists(st.tuples(ids, labels, st.sampled_from(list(EntryKind)), st.integers(0, 2**40)), max_size=20))
def test_roundtrip_property(rows):
    wl = Whitelist()
    for eid, label, kind, t in rows:
        wl.insert(eid, EntryMeta(kind, label, t))
    assert _roundtrip(wl) == wl


def test_truncated_digest_names_line():
    text = f"HADESWL v1\nexec {'ab' * 32} 0 /bin/sh\nexec {'ab' * 31} 0 /bin/ls\n"
    with pytest.raises(CorruptEntry) as exc:
        wlio.load(io.StringIO(text))
    assert exc.value.lineno == 3
    assert "line 3" in str(exc.value)


@pytest.mark.parametrize(
    "line",
    [f"bogus {'00' * 32} 0 x", f"exec {'zz' * 32} 0 x", f"exec {'00' * 32} notanint x", f"exec {'00' * 32} 0"],
)
def test_corrupt_lines(line):
    with pytest.raises(CorruptEntry):
        wlio.load(io.StringIO("HADESWL v1\n" + line + "\n"))


@pytest.mark.parametrize("header", ["", "HADESWL v2", "whitelist"])
def test_bad_header(header):
    with pytest.raises(FormatError):
        wlio.load(io.StringIO(header + "\n"))


@pytest.mark.parametrize("label", ["", "a\nb", "a\rb"])
def test_bad_label(label):
    with pytest.raises(ValueError):
        EntryMeta(EntryKind.EXEC, label)


def test_count_by_kind():
    wl = Whitelist()
    wl.insert(EntryId(b"\x01" * 32), meta(kind=EntryKind.SIGNAL))
    wl.insert(EntryId(b"\x02" * 32), meta())
    wl.insert(EntryId(b"\x03" * 32), meta())
    assert wl.count(EntryKind.EXEC) == 2 and wl.count(EntryKind.SIGNAL) == 1 and wl.count() == 3


def test_router_idle_profile_size(fixtures_root):
    device = fixtures_root / "router-a"
    expected = ref_count_trace_entries(device, "idle")
    assert expected == 12
    dev = VirtualDevice(load_image(device))
    dev.bootstrap()
    dev.replay(load_trace(device / "traces" / "idle.trace"))
    assert len(dev.engine.whitelist) == expected
