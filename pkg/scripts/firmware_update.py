"""Walk through a remote firmware update over a loopback control channel.

The owner disables protection, the device swaps in a new httpd, the owner asks
for a fresh profile and then re-enables protection. The new binary must run
without a single denial, while a tampered copy is still blocked.

    python scripts/firmware_update.py [--k 64] [--n 16]
"""

import argparse

from execguard.commands import PROFILE, PROTECT, STOP
from execguard.engine import Mode
from execguard.ots import MerkleKeys, OtsParams
from execguard.protocol import owner_sign_command, run_control_server, send_frame
from execguard.sim import FIXTURES_ROOT, VirtualDevice, load_image, load_trace, parse_trace


def exec_httpd(dev, t):
    trace = parse_trace(['{"device": "router-a"}', '{"t": %d, "kind": "exec", "path": "/usr/sbin/httpd"}' % t])
    return dev.replay(trace).decisions[0]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--k", type=int, default=64)
    ap.add_argument("--n", type=int, default=16)
    args = ap.parse_args()

    keys = MerkleKeys(b"firmware-update-demo", args.n, OtsParams(args.k))
    image = load_image(FIXTURES_ROOT / "router-a")
    dev = VirtualDevice(image)
    dev.profile([load_trace(image.trace_path("idle"))])
    server = run_control_server(dev.engine, keys.root, ("127.0.0.1", 0))
    denials = []
    leaf = 0

    def command(cmd, note):
        nonlocal leaf
        leaf += 1
        frame = owner_sign_command(keys, leaf, cmd).encode()
        status = send_frame(server.address, frame)
        print(f"{note:<28} leaf {leaf:<3} {len(frame):>6} bytes -> {status.code.name} mode={status.mode}")
        assert status.accepted

    try:
        command(STOP, "disable protection")
        dev.fs["/usr/sbin/httpd"] = b"httpd firmware 2.0"
        print("firmware written: /usr/sbin/httpd")
        denials += [d for d in [exec_httpd(dev, 0)] if d.denied]
        command(PROFILE, "profile new firmware")
        denials += [d for d in [exec_httpd(dev, 10)] if d.denied]
        command(PROTECT, "enable protection")
        d = exec_httpd(dev, 20)
        print(f"new httpd under protection: {d.log_line()}")
        denials += [d] if d.denied else []
        dev.fs["/usr/sbin/httpd"] = b"httpd firmware 2.0 + implant"
        d = exec_httpd(dev, 30)
        print(f"tampered httpd:             {d.log_line()}")
    finally:
        server.shutdown()
        server.server_close()
    assert dev.engine.mode is Mode.ENFORCING and d.denied
    print(f"denials during update: {len(denials)}")
    return 0 if not denials else 1


if __name__ == "__main__":
    raise SystemExit(main())
