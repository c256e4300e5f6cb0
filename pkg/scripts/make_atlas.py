#!/usr/bin/env python3
"""Scan (J0, rho0, E0) and tabulate backgrounds with their boundary data.

Each row reports the induced boundary triple and the subsonic margin, or the
breakdown type and location. The scan does not claim to trace the true
admissible-set boundary; it records where the integration succeeds.
"""

import argparse
import itertools
from pathlib import Path

import numpy as np

from ep_nozzle import GasLaw
from ep_nozzle.ode1d import write_atlas


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--J0", type=float, nargs=3, default=[0.3, 0.9, 4],
                    metavar=("MIN", "MAX", "N"))
    ap.add_argument("--rho0", type=float, nargs=3, default=[1.0, 1.6, 4])
    ap.add_argument("--E0", type=float, nargs=3, default=[-0.3, 0.5, 5])
    ap.add_argument("--L", type=float, default=1.0)
    ap.add_argument("--b0", type=float, default=1.0)
    ap.add_argument("--gamma", type=float, default=2.0)
    ap.add_argument("--out", type=Path, default=Path("out/atlas.csv"))
    args = ap.parse_args()

    law = GasLaw(gamma=args.gamma, k0=1.0)
    grids = [np.linspace(lo, hi, int(n)) for lo, hi, n in (args.J0, args.rho0, args.E0)]
    cases = list(itertools.product(*grids))
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_atlas(args.out, law, args.L, args.b0, cases)
    print(f"wrote {len(cases)} rows to {args.out}")


if __name__ == "__main__":
    main()
