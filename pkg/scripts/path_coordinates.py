"""Coordinates of the sectors, rays and arc contour used by a run (data only).

Writes CSV files with columns (curve, x, y): the covering sectors in the eps
plane, the Borel sectors and root rays in the u plane, the time sector, and
the contour ray -> arc |u| = r0 -> ray that carries the difference of two
adjacent solutions.

Usage: python3 scripts/path_coordinates.py [--config FILE] [--out DIR]
"""

import argparse
import csv
import math
from pathlib import Path

import numpy as np

from artifact.geometry import roots_qlm
from artifact.pipeline import default_config, load_config, run_geometry


def sector_outline(direction, aperture, radius, n=60):
    a = direction + np.linspace(-aperture / 2, aperture / 2, n)
    arc = radius * np.exp(1j * a)
    return np.concatenate([[0j], arc, [0j]])


def write(path, curves):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["curve", "x", "y"])
        for name, pts in curves:
            for p in pts:
                w.writerow([name, repr(float(p.real)), repr(float(p.imag))])


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--config")
    ap.add_argument("--out", default="runs/paths")
    a = ap.parse_args()
    cfg = load_config(a.config) if a.config else default_config()
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    geo = run_geometry(cfg)
    data, spec = geo.data, cfg.problem

    eps0 = spec.epsilon0
    write(out / "eps_plane.csv",
          [(f"E_{i}", sector_outline(E.direction, E.aperture, min(E.radius, eps0)))
           for i, E in enumerate(data.coverings)]
          + [("ladder_direction", np.array([0, eps0]) * np.exp(1j * geo.gamma))])

    R = 1.5
    roots = roots_qlm(spec, 0.0)
    lad = cfg.ladder
    th = geo.gamma + lad.ray_offset_deg * math.pi / 180 * np.linspace(-1, 1, 80)
    contour = np.concatenate([np.linspace(R, lad.r0, 20) * np.exp(1j * geo.ray_lo),
                              lad.r0 * np.exp(1j * th),
                              np.linspace(lad.r0, R, 20) * np.exp(1j * geo.ray_hi)])
    write(out / "u_plane.csv",
          [(f"U_{i}", sector_outline(U.direction, U.aperture, R)) for i, U in enumerate(data.U_sectors)]
          + [(f"root_ray_{i}", np.array([0, R]) * np.exp(1j * np.angle(q))) for i, q in enumerate(roots)]
          + [("roots_m0", roots)]
          + [("difference_contour", contour[::-1])]
          + [("ray_p", np.array([0, R]) * np.exp(1j * geo.d_p)), ("ray_q", np.array([0, R]) * np.exp(1j * geo.d_q))])

    T = data.T_sector
    write(out / "t_plane.csv", [("T", sector_outline(T.direction, T.aperture, T.radius))])
    print(f"wrote {out}/eps_plane.csv, u_plane.csv, t_plane.csv")


if __name__ == "__main__":
    main()
