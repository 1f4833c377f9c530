"""Whitelist size per device after 1, 2 and 4 profiling periods of each benign trace."""

import argparse
from pathlib import Path

from execguard.sim import FIXTURES_ROOT, load_image, load_trace, profile_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--fixtures", default=str(FIXTURES_ROOT))
    ap.add_argument("--multiples", type=int, nargs="+", default=[1, 2, 4])
    args = ap.parse_args()

    root = Path(args.fixtures)
    header = ["device", "trace"] + [f"{m}x" for m in args.multiples]
    print("  ".join(f"{h:<12}" for h in header).rstrip())
    for device_dir in sorted(p for p in root.iterdir() if (p / "image.toml").is_file()):
        image = load_image(device_dir)
        for name in ("idle", "interaction"):
            trace = load_trace(image.trace_path(name))
            sizes = profile_experiment(image, trace, [m * trace.duration for m in args.multiples])
            print("  ".join(f"{c:<12}" for c in [image.name, name] + [str(v) for v in sizes.values()]).rstrip())


if __name__ == "__main__":
    main()
