"""Run named acceptance criteria (all by default) and write the results as JSON."""
import argparse
import json
import sys

from akstab.checks import CRITERIA, run_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("names", nargs="*", help=f"subset of {', '.join(CRITERIA)}")
    ap.add_argument("--json", help="write the measured values here")
    args = ap.parse_args()
    unknown = set(args.names) - set(CRITERIA)
    if unknown:
        ap.error(f"unknown criteria: {sorted(unknown)}")
    ok, results = run_suite(args.names or None, stream=sys.stdout)
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(results, fh, indent=2)
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
