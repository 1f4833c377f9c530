"""Command-line entry point.

Exit codes: 0 clean run, 1 detection (denials, rejected command, failed
scenario), 2 usage or file-format error. Machine-readable output goes to
stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import signal
import sys
import threading
from pathlib import Path

from . import whitelist as wlio
from .commands import CommandDecodeError, parse_command
from .digest import DigestError
from .engine import EngineError, Mode
from .ots import MerkleKeys, OtsError, OtsParams, lamport_sign
from .protocol import (
    MalformedFrame,
    ReportForwarder,
    ReportQueue,
    owner_sign_command,
    parse_endpoint,
    run_control_server,
    send_frame,
)
from .scenarios import format_table, run_all
from .sim import FIXTURES_ROOT, SimError, VirtualDevice, load_image, load_trace, profile_experiment

EXIT_OK, EXIT_DETECTED, EXIT_USAGE = 0, 1, 2


def _image(arg: str):
    path = Path(arg)
    if not (path / "image.toml").is_file() and (FIXTURES_ROOT / arg / "image.toml").is_file():
        path = FIXTURES_ROOT / arg
    return load_image(path)


def _trace(image, arg: str):
    path = Path(arg)
    if not path.is_file() and image.root is not None:
        path = image.trace_path(arg)
    return load_trace(path)


def cmd_keygen(args) -> int:
    seed = bytes.fromhex(args.seed_hex) if args.seed_hex else os.urandom(32)
    keys = MerkleKeys(seed, args.n, OtsParams(args.k))
    sk, _ = keys.keypair(1)
    lamport = lamport_sign(sk, b"")
    merkle = keys.sign(1, b"")
    with open(args.out, "wb") as fh:
        keys.save(fh)
    print(f"root {keys.root.hex()}")
    print(f"private_key_bytes {sk.size_bytes}")
    print(f"lamport_signature_bytes {lamport.size_bytes}")
    print(f"merkle_signature_bytes {merkle.size_bytes}")
    return EXIT_OK


def cmd_profile(args) -> int:
    image = _image(args.image)
    dev = VirtualDevice(image, args.quiet_period)
    dev.profile([_trace(image, t) for t in args.trace], with_reboot=not args.no_reboot)
    wlio.save_path(dev.engine.whitelist, args.out)
    print(f"entries {len(dev.engine.whitelist)}")
    return EXIT_OK


def cmd_enforce(args) -> int:
    image = _image(args.image)
    dev = VirtualDevice(image)
    dev.bootstrap(wlio.load_path(args.whitelist), mode=Mode.ENFORCING)
    result = dev.replay(_trace(image, args.trace))
    sys.stdout.write(result.log_text())
    for d in result.denials:
        print(f"denied seq {d.seq}: {d.kind} {d.entry_id.hex()}", file=sys.stderr)
    return EXIT_DETECTED if result.denials else EXIT_OK


def _load_keys(path) -> MerkleKeys:
    with open(path, "rb") as fh:
        return MerkleKeys.load(fh)


def _print_status(status) -> int:
    print(f"status {status.code.name} counter {status.replay_counter} mode {status.mode} {status.detail}".rstrip())
    return EXIT_OK if status.accepted else EXIT_DETECTED


def cmd_sign(args) -> int:
    keys = _load_keys(args.key)
    frame = owner_sign_command(keys, args.leaf, parse_command(args.command)).encode()
    if args.out:
        Path(args.out).write_bytes(frame)
    if args.to:
        return _print_status(send_frame(parse_endpoint(args.to), frame))
    if not args.out:
        print(frame.hex())
    return EXIT_OK


def cmd_send(args) -> int:
    frame = Path(args.frame).read_bytes()
    return _print_status(send_frame(parse_endpoint(args.to), frame))


def cmd_serve(args) -> int:
    image = _image(args.image)
    if args.root:
        root = bytes.fromhex(args.root)
    else:
        root = _load_keys(args.key).root
    dev = VirtualDevice(image)
    wl = wlio.load_path(args.whitelist) if args.whitelist else None
    engine = dev.bootstrap(wl, mode=Mode(args.mode))
    forwarder = None
    if args.owner:
        queue = ReportQueue()
        engine.report_sink = queue.put
        forwarder = ReportForwarder(queue, parse_endpoint(args.owner))
        forwarder.start()
    server = run_control_server(engine, root, parse_endpoint(args.listen))
    host, port = server.address
    print(f"listening on {host}:{port}", file=sys.stderr, flush=True)

    done = threading.Event()
    signal.signal(signal.SIGTERM, lambda *_: done.set())
    try:
        if args.trace:
            # give the owner a chance to send commands before the events arrive
            done.wait(args.trace_delay)
            result = dev.replay(_trace(image, args.trace))
            sys.stdout.write(result.log_text())
            sys.stdout.flush()
        done.wait()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()
        if forwarder is not None:
            forwarder.stop()
    return EXIT_OK


def cmd_scenarios(args) -> int:
    results = run_all(Path(args.fixtures))
    sys.stdout.write(format_table(results))
    return EXIT_OK if all(r.detected for r in results) else EXIT_DETECTED


def cmd_profile_periods(args) -> int:
    image = _image(args.image)
    trace = _trace(image, args.trace)
    durations = [int(h * 3_600_000) for h in args.hours]
    for d, size in profile_experiment(image, trace, durations).items():
        print(f"{d / 3_600_000:g}h {size}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="execguard", description="Whitelist-based process execution guard simulator.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("keygen", help="derive a Merkle key tree and write the key file")
    p.add_argument("--k", type=int, default=256, help="hash size in bits (default 256)")
    p.add_argument("--n", type=int, default=1 << 15, help="number of one-time keys, a power of two")
    p.add_argument("--seed-hex", help="use this seed instead of a random one")
    p.add_argument("--out", required=True, help="key file to write")
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("profile", help="profile benign traces and write a whitelist")
    p.add_argument("--image", required=True, help="device fixture directory or built-in device name")
    p.add_argument("--trace", required=True, action="append", help="trace file or name (repeatable)")
    p.add_argument("--out", required=True, help="whitelist file to write")
    p.add_argument("--quiet-period", type=int, default=3_600_000, help="quiet period in logical ms")
    p.add_argument("--no-reboot", action="store_true", help="skip the boot-time profiling reboot")
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("enforce", help="replay a trace against a whitelist; exit 1 on any denial")
    p.add_argument("--image", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--whitelist", required=True)
    p.set_defaults(func=cmd_enforce)

    p = sub.add_parser("sign", help="sign an owner command (stop|start|profile|protect|add|remove)")
    p.add_argument("--key", required=True, help="key file from keygen")
    p.add_argument("--leaf", type=int, required=True, help="one-time leaf index, 1-based, never reuse")
    p.add_argument("--out", help="save the command frame to this file")
    p.add_argument("--to", metavar="HOST:PORT", help="deliver the frame and print the device status")
    p.add_argument("command", nargs="+")
    p.set_defaults(func=cmd_sign)

    p = sub.add_parser("send", help="deliver a saved command frame")
    p.add_argument("--to", metavar="HOST:PORT", required=True)
    p.add_argument("frame")
    p.set_defaults(func=cmd_send)

    p = sub.add_parser("serve", help="run the device-side control server")
    p.add_argument("--image", required=True)
    p.add_argument("--whitelist")
    key = p.add_mutually_exclusive_group(required=True)
    key.add_argument("--root", help="master public key (hex)")
    key.add_argument("--key", help="derive the master public key from a key file")
    p.add_argument("--listen", default="127.0.0.1:0", metavar="HOST:PORT")
    p.add_argument("--owner", metavar="HOST:PORT", help="forward denial reports here")
    p.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.ENFORCING.value)
    p.add_argument("--trace", help="replay this trace once the server is up")
    p.add_argument("--trace-delay", type=float, default=0.0, help="seconds to wait before replaying")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("scenarios", help="run every shipped attack scenario")
    p.add_argument("--fixtures", default=str(FIXTURES_ROOT))
    p.set_defaults(func=cmd_scenarios)

    p = sub.add_parser("profile-periods", help="whitelist size after profiling for several durations")
    p.add_argument("--image", required=True)
    p.add_argument("--trace", default="idle")
    p.add_argument("--hours", type=float, nargs="+", default=[1, 2, 4])
    p.set_defaults(func=cmd_profile_periods)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (
        wlio.WhitelistError,
        SimError,
        OtsError,
        DigestError,
        EngineError,
        MalformedFrame,
        CommandDecodeError,
        ValueError,
        OSError,
    ) as exc:
        print(f"execguard: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
