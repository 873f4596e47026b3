"""Observed convergence factor of the Schwarz iterations as the number of
decimal digits in the subdomain solves grows.

Few digits already give the full-precision rate; the table shows where the
curves flatten out.

    python3 demos/02_precision_sweep.py --problem 2 --n 30
"""

import argparse

from mpschwarz.decomp import two_domain_partition
from mpschwarz.harness import default_rounding
from mpschwarz.linalg import lu_factor, solve
from mpschwarz.pde import discretize, make_rhs_and_init
from mpschwarz.schwarz import SchwarzConfig, build_operator, iterate

ap = argparse.ArgumentParser()
ap.add_argument("--problem", type=int, default=1)
ap.add_argument("--n", type=int, default=30)
args = ap.parse_args()

A = discretize(args.problem, args.n)
part = two_domain_partition(args.n)
f, u0 = make_rhs_and_init(A.shape[0], seed=0)
u_true = solve(lu_factor(A), f)
methods = ["MS", "dAS", "RAS"]
print("digits " + " ".join(f"{m:>8}" for m in methods))
for d in [1, 2, 3, 4, 5, 6, 8, 16]:
    row = []
    for m in methods:
        op = build_operator(A, part, SchwarzConfig(m, None, f"dec:{d}", default_rounding(args.problem)))
        row.append(iterate(op, u0, f, u_true).rho_conv)
    print(f"{d:>6} " + " ".join(f"{r:8.4f}" for r in row))
