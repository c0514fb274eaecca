"""Run every checked-in scenario and report its expected-value checks.

    python scripts/reproduce_scenarios.py [--out OUTDIR] [--only NAME ...]
"""

import argparse
import sys
import time
from pathlib import Path

from ybtransducer.scenarios import run_and_check, scenario_names

ROOT = Path(__file__).resolve().parent.parent


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--scenarios", default=ROOT / "scenarios", type=Path)
    p.add_argument("--out", default=Path("scenario_out"), type=Path)
    p.add_argument("--only", nargs="*")
    args = p.parse_args(argv)
    names = args.only or scenario_names(args.scenarios)
    failures = 0
    for name in names:
        t0 = time.perf_counter()
        results = run_and_check(args.scenarios, name, args.out / name)
        dt = time.perf_counter() - t0
        bad = [r for r in results if not r.ok]
        failures += bool(bad)
        print(f"{'PASS' if not bad else 'FAIL'} {name:32s} {len(results)} checks {dt:6.2f} s")
        for r in bad:
            print(f"    {r.describe()}")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
