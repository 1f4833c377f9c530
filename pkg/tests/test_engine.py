import errno

import pytest
from hypothesis import given, strategies as st

from execguard.commands import PROFILE, PROTECT, START, STOP, VerifiedCommand, add_entry, remove_entry
from execguard.digest import EntryKind, exec_id
from execguard.engine import (
    DeviceEvent,
    EngineConfig,
    Exec,
    InsertModule,
    Kill,
    MissingProtectedFile,
    Mode,
    Reason,
    Reboot,
    RemoveModule,
    UnresolvedBinary,
    Verdict,
    WrongMode,
    bootstrap,
    entry_for,
)
from execguard.whitelist import EntryMeta, Whitelist
from oracles import ref_entry_id, ref_signal_descriptor

ENGINE_BIN = "/lib/modules/guard.ko"
INIT = "/etc/init.d/rcS"
PROGRAMS = {f"/bin/p{i}": f"program {i}".encode() for i in range(6)}


def make_fs():
    fs = {ENGINE_BIN: b"engine", INIT: b"#!/bin/sh\nguard\n", "/sbin/insmod": b"bb", "/sbin/rmmod": b"bb"}
    fs.update(PROGRAMS)
    return fs


def make_engine(mode=Mode.PROFILING, whitelist=None, quiet=1000):
    fs = make_fs()
    return bootstrap(fs, EngineConfig(ENGINE_BIN, INIT, quiet, "dev"), whitelist, mode=mode), fs


def ex(seq, path, t=None):
    return DeviceEvent(seq, seq if t is None else t, Exec(path, (), PROGRAMS[path]))


_leaf = iter(range(1, 10**9))


def cmd(engine, command):
    engine.apply_command(VerifiedCommand(command, next(_leaf)))


def test_enforcing_denies_unknown_with_enosys_and_reports():
    engine, _ = make_engine(Mode.ENFORCING)
    sink = []
    engine.report_sink = sink.append
    d, r = engine.handle_event(ex(1, "/bin/p0"))
    assert d.verdict is Verdict.DENY and d.code == errno.ENOSYS and d.reason is Reason.NOT_WHITELISTED
    assert r is not None and sink == [r]
    assert r.entry_id == ref_entry_id("exec", PROGRAMS["/bin/p0"], "/bin/p0")
    assert d.log_line() == f"1 DENY:ENOSYS exec {r.entry_id.hex()} not-whitelisted"


def test_profiling_adds_once():
    engine, _ = make_engine()
    for seq in range(1, 4):
        d, r = engine.handle_event(ex(seq, "/bin/p1"))
        assert d.verdict is Verdict.ALLOW and r is None
    assert len(engine.whitelist) == 1
    assert engine.state.last_insert_time == 1


def test_kill_denied_with_eperm():
    engine, _ = make_engine(Mode.ENFORCING)
    d, _ = engine.handle_event(DeviceEvent(1, 1, Kill("/bin/p2", 10, "/sbin/preinit", PROGRAMS["/bin/p2"])))
    assert d.code == errno.EPERM and d.kind == "signal"
    expected = ref_entry_id("signal", PROGRAMS["/bin/p2"], "/bin/p2", ref_signal_descriptor("/bin/p2", 10, "/sbin/preinit"))
    assert d.entry_id == expected


def test_kill_context_matters():
    a = entry_for(Kill("/bin/p2", 10, "/sbin/a", b"x"))[1]
    assert a != entry_for(Kill("/bin/p2", 9, "/sbin/a", b"x"))[1]
    assert a != entry_for(Kill("/bin/p2", 10, "/sbin/b", b"x"))[1]


def test_insmod_known_vs_novel_module():
    engine, fs = make_engine()
    known = InsertModule("/sbin/insmod", "wlan", b"good module", fs["/sbin/insmod"])
    engine.handle_event(DeviceEvent(1, 1, known))
    engine.handle_event(DeviceEvent(2, 2, RemoveModule("/sbin/rmmod", "wlan", fs["/sbin/rmmod"])))
    cmd(engine, PROTECT)
    assert not engine.handle_event(DeviceEvent(3, 3, known))[0].denied
    assert not engine.handle_event(DeviceEvent(4, 4, RemoveModule("/sbin/rmmod", "wlan", fs["/sbin/rmmod"])))[0].denied
    rootkit = InsertModule("/sbin/insmod", "wlan", b"rootkit", fs["/sbin/insmod"])
    d, r = engine.handle_event(DeviceEvent(5, 5, rootkit))
    assert d.denied and d.code == errno.ENOSYS and r.kind is EntryKind.MODULE_INSERT
    d, _ = engine.handle_event(DeviceEvent(6, 6, RemoveModule("/sbin/rmmod", "guard", fs["/sbin/rmmod"])))
    assert d.denied


def test_reboot_restores_protected_files_and_keeps_mode():
    engine, fs = make_engine(Mode.ENFORCING)
    original = (fs[ENGINE_BIN], fs[INIT])
    fs[ENGINE_BIN] = b"patched"
    del fs[INIT]
    d, _ = engine.handle_event(DeviceEvent(1, 1, Reboot()))
    assert d.reason is Reason.REBOOT and not d.denied
    assert (fs[ENGINE_BIN], fs[INIT]) == original
    assert engine.mode is Mode.ENFORCING


def test_bootstrap_requires_protected_files():
    fs = make_fs()
    del fs[INIT]
    with pytest.raises(MissingProtectedFile):
        bootstrap(fs, EngineConfig(ENGINE_BIN, INIT))


def test_unresolved_binary():
    engine, _ = make_engine()
    with pytest.raises(UnresolvedBinary):
        engine.handle_event(DeviceEvent(1, 1, Exec("/bin/p0")))


def test_quiet_period():
    engine, _ = make_engine(quiet=1000)
    engine.handle_event(ex(1, "/bin/p0", t=500))
    assert engine.quiet_timer(500) == 1000
    assert not engine.profiling_complete(1499)
    with pytest.raises(WrongMode):
        engine.finish_bootstrap(1499)
    engine.handle_event(ex(2, "/bin/p0", t=1400))  # already known: timer keeps running
    assert engine.profiling_complete(1500)
    engine.finish_bootstrap(1500)
    assert engine.mode is Mode.ENFORCING
    with pytest.raises(WrongMode):
        engine.profiling_complete()


def test_stop_start_profile_commands():
    engine, _ = make_engine(Mode.ENFORCING)
    cmd(engine, STOP)
    assert engine.mode is Mode.STOPPED
    d, r = engine.handle_event(ex(1, "/bin/p3"))
    assert not d.denied and d.reason is Reason.PROTECTION_OFF and r is None
    assert len(engine.whitelist) == 0
    cmd(engine, START)
    assert engine.mode is Mode.ENFORCING
    assert engine.handle_event(ex(2, "/bin/p3"))[0].denied
    cmd(engine, PROFILE)
    assert engine.mode is Mode.PROFILING and engine.quiet_timer() == engine.config.quiet_period
    engine.handle_event(ex(3, "/bin/p3"))
    cmd(engine, PROTECT)
    assert not engine.handle_event(ex(4, "/bin/p3"))[0].denied
    assert len(engine.audit) == 4


def test_add_and_remove_entry():
    engine, _ = make_engine(Mode.ENFORCING)
    eid = exec_id(PROGRAMS["/bin/p4"], "/bin/p4")
    cmd(engine, add_entry(eid, EntryKind.EXEC, "/bin/p4"))
    assert not engine.handle_event(ex(1, "/bin/p4"))[0].denied
    cmd(engine, remove_entry(eid))
    assert engine.handle_event(ex(2, "/bin/p4"))[0].denied


paths = st.sampled_from(sorted(PROGRAMS))


@given(st.lists(paths, max_size=20), st.lists(paths, max_size=20))
def test_enforcing_allows_exactly_whitelisted(profiled, later):
    wl = Whitelist()
    for p in profiled:
        wl.insert(exec_id(PROGRAMS[p], p), EntryMeta(EntryKind.EXEC, p))
    engine, _ = make_engine(Mode.ENFORCING, wl)
    for seq, p in enumerate(later, 1):
        d, r = engine.handle_event(ex(seq, p))
        assert d.denied == (p not in profiled)
        assert (r is not None) == d.denied
    assert len(engine.whitelist) == len(set(profiled))


@given(st.lists(paths, min_size=1, max_size=30))
def test_profile_then_enforce_is_complete(trace):
    engine, _ = make_engine()
    for seq, p in enumerate(trace, 1):
        engine.handle_event(ex(seq, p))
    cmd(engine, PROTECT)
    assert not any(engine.handle_event(ex(seq, p))[0].denied for seq, p in enumerate(trace, 1))


@given(st.lists(paths, max_size=20), st.lists(paths, min_size=1, max_size=20))
def test_denials_shrink_as_whitelist_grows(base, extra):
    def denials(wl_paths):
        wl = Whitelist()
        for p in wl_paths:
            wl.insert(exec_id(PROGRAMS[p], p), EntryMeta(EntryKind.EXEC, p))
        engine, _ = make_engine(Mode.ENFORCING, wl)
        return {seq for seq, p in enumerate(sorted(PROGRAMS), 1) if engine.handle_event(ex(seq, p))[0].denied}

    assert denials(base + extra) <= denials(base)


@given(st.lists(st.tuples(paths, st.booleans()), max_size=25))
def test_decisions_deterministic(steps):
    def run():
        engine, _ = make_engine()
        out = []
        for seq, (p, switch) in enumerate(steps, 1):
            if switch:
                cmd(engine, PROTECT if engine.mode is Mode.PROFILING else PROFILE)
            out.append(engine.handle_event(ex(seq, p))[0].log_line())
        return out

    assert run() == run()
