"""Observed Picard contraction ratio as the lower-order coefficients grow.

Solves the fixed point on a reduced grid over a range of coefficient sizes
c_l and of the leading ratio r = |Q/R_D| (roots of P_m sit at modulus
(r/72)^(1/6)) and reports the largest consecutive-step ratio, or the
iteration at which the map stops contracting.

Usage: python3 scripts/contraction_scan.py [--out FILE]
"""

import argparse
import csv
import dataclasses

from artifact.banach import FreqGrid, RadialGrid
from artifact.fixedpoint import NonContractionError, solve_fixed_point
from artifact.problem import worked_example_problem


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/contraction_scan.csv")
    a = ap.parse_args()
    grid = RadialGrid.graded(30.0, 0.25, 1.0, 1.3, 3.0, 12)
    freq = FreqGrid.for_decay(1.0, 0.4)
    rows = []
    for r in (72.0, 24.0, 8.0):
        for c in (0.0, 0.05, 0.5, 2.0, 8.0):
            spec = dataclasses.replace(worked_example_problem(r=r), c_l=(c, c))
            try:
                _, rep = solve_fixed_point(spec, 1.0, 1e-8, 120, grid, freq, [0.0])
                rows.append([r, c, rep.max_ratio, rep.iterations, rep.converged])
                print(f"r = {r:4.0f}, c = {c:4.2f}: max ratio {rep.max_ratio:.3f}, {rep.iterations} iterations")
            except NonContractionError as exc:
                rows.append([r, c, float("nan"), -1, False])
                print(f"r = {r:4.0f}, c = {c:4.2f}: {exc}")
    with open(a.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "c_l", "max_ratio", "iterations", "converged"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
