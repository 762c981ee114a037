"""Run the acceptance suite and print one verdict line per criterion.

    python scripts/run_acceptance.py            # all eleven criteria (about 20 min)
    python scripts/run_acceptance.py --quick    # skip the slow simulation and wave criteria
"""

import argparse
import sys
from pathlib import Path

import pytest


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true", help="skip tests marked slow")
    args = ap.parse_args()
    suite = Path(__file__).resolve().parent.parent / "tests" / "test_acceptance.py"
    argv = [str(suite), "-q", "-p", "no:cacheprovider"]
    if args.quick:
        argv += ["-m", "not slow"]
    return int(pytest.main(argv))


if __name__ == "__main__":
    sys.exit(main())
