"""Run an acceptance suite and print one PASS/FAIL line per criterion.

    python scripts/run_acceptance.py [--suite fast|all|...] [--json results.json]
"""

import argparse
import json
import sys

from heavytail.acceptance import SUITES, run_suite


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--suite", default="all", choices=sorted(SUITES))
    p.add_argument("--json", help="also write the full results here")
    args = p.parse_args()
    results = run_suite(args.suite, report=lambda r: print(r.line(), flush=True))
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    if args.json:
        with open(args.json, "w") as f:
            json.dump([r.to_dict() for r in results], f, indent=1, default=str)
    return 0 if passed == len(results) else 1


if __name__ == "__main__":
    sys.exit(main())
