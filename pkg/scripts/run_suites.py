"""Run verification suites and write JSON plus table reports.

    python3 scripts/run_suites.py [suite ...] [--out DIR] [--resolution ref|fine]
"""

import argparse
import os
import sys
import time

from muskatlab.verification import SUITES, SuiteConfig, run_suite


def main() -> int:
    p = argparse.ArgumentParser()
    p.add_argument("suites", nargs="*", default=list(SUITES))
    p.add_argument("--out", default="out")
    p.add_argument("--resolution", choices=("ref", "fine"), default="ref")
    args = p.parse_args()
    os.makedirs(args.out, exist_ok=True)
    cfg = SuiteConfig(resolution=args.resolution)
    ok = True
    for name in args.suites:
        t0 = time.perf_counter()
        rep = run_suite(name, cfg)
        ok &= rep.passed
        with open(os.path.join(args.out, f"verify_{name}.json"), "w") as fh:
            fh.write(rep.to_json() + "\n")
        print(rep.table())
        print(f"({name}: {time.perf_counter() - t0:.1f} s)", flush=True)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
