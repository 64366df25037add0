"""Full validate/solve/verify run of the built-in k=3, k'=2 configuration.

Usage: python3 scripts/run_worked_example.py [--out DIR] [--threads N]
Prints the seven-line acceptance table; the exit status is 0 when all pass.
"""

import argparse
import sys

from artifact.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/worked_example")
    ap.add_argument("--threads", type=int, default=4)
    a = ap.parse_args()
    sys.exit(main(["all", "--out", a.out, "--threads", str(a.threads)]))
