"""Where the error lives after a few multiplicative sweeps.

Exports the error grids after sweeps 1-3 (CSV, one file per sweep) and
prints the largest error per grid column. With a coarse format the error
concentrates along the overlap in the middle of the domain.

    python3 demos/04_error_ridge.py --format q43 --out /tmp/ridge
"""

import argparse
from pathlib import Path

import numpy as np

from mpschwarz.decomp import two_domain_partition
from mpschwarz.harness import export_error_snapshot
from mpschwarz.linalg import lu_factor, solve
from mpschwarz.pde import discretize, make_rhs_and_init
from mpschwarz.schwarz import SchwarzConfig, build_operator

ap = argparse.ArgumentParser()
ap.add_argument("--n", type=int, default=30)
ap.add_argument("--format", default="q43")
ap.add_argument("--out", default="ridge")
args = ap.parse_args()

A = discretize(1, args.n)
op = build_operator(A, two_domain_partition(args.n), SchwarzConfig("MS", None, args.format))
f, u0 = make_rhs_and_init(A.shape[0], seed=0)
paths = export_error_snapshot(op, u0, f, solve(lu_factor(A), f), [1, 2, 3], Path(args.out))
for p in paths:
    col_max = np.abs(np.loadtxt(p, delimiter=",")).max(axis=0)
    peak = int(col_max.argmax())
    print(f"{p.name}: peak column {peak} of {args.n}, max |error| {col_max.max():.2e}")
