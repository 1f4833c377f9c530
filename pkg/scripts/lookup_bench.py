"""Whitelist lookup latency against whitelist size.

Prints the median per-probe latency (each probe timed over repeated calls) and
the cold random-order latency for several sizes.
"""

import argparse
import random
import statistics
import time

from execguard.digest import EntryId, EntryKind
from execguard.whitelist import EntryMeta, Whitelist


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[10, 100, 1000, 10_000, 100_000, 1_000_000])
    ap.add_argument("--probes", type=int, default=10_000)
    ap.add_argument("--reps", type=int, default=20)
    ap.add_argument("--seed", type=int, default=1)
    args = ap.parse_args()
    rng = random.Random(args.seed)
    clock = time.perf_counter_ns

    print(f"{'entries':>9}  {'warm ns':>8}  {'cold ns':>8}")
    for size in args.sizes:
        wl = Whitelist()
        ids = [EntryId(rng.randbytes(32)) for _ in range(size)]
        for eid in ids:
            wl.insert(eid, EntryMeta(EntryKind.EXEC, "p"))
        probes = [rng.choice(ids) if i % 2 else EntryId(rng.randbytes(32)) for i in range(args.probes)]
        contains = wl.contains
        warm = []
        for p in probes:
            t0 = clock()
            for _ in range(args.reps):
                contains(p)
            warm.append((clock() - t0) / args.reps)
        cold = []
        for start in range(0, len(probes), 100):
            t0 = clock()
            for p in probes[start : start + 100]:
                contains(p)
            cold.append((clock() - t0) / 100)
        print(f"{size:>9}  {statistics.median(warm):>8.0f}  {statistics.median(cold):>8.0f}")


if __name__ == "__main__":
    main()
