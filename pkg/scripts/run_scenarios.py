"""Run every shipped attack scenario and print its decision log and the summary table."""

import sys

from execguard.scenarios import format_table, run_all


def main():
    results = run_all()
    for r in results:
        print(f"== {r.name} ({r.device}): {r.expectation.summary}")
        sys.stdout.write(r.replay.log_text())
    print()
    sys.stdout.write(format_table(results))
    return 0 if all(r.detected for r in results) else 1


if __name__ == "__main__":
    raise SystemExit(main())
