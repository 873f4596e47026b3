"""Round the subdomain matrices of an advection-diffusion problem into each
low-precision format and see which formats keep the convergence guarantees.

    python3 demos/01_rounding_and_conditions.py --n 30
"""

import argparse
import warnings

from mpschwarz.conditions import check_operator
from mpschwarz.decomp import two_domain_partition
from mpschwarz.pde import discretize
from mpschwarz.schwarz import SchwarzConfig, build_operator

ap = argparse.ArgumentParser()
ap.add_argument("--problem", type=int, default=1)
ap.add_argument("--n", type=int, default=30)
args = ap.parse_args()

A = discretize(args.problem, args.n)
part = two_domain_partition(args.n)
print(f"problem {args.problem}, N = {A.shape[0]}, subdomain sizes {part.sizes}\n")
print(f"{'format':>9} {'min F':>10} {'||A^-1 F||_2':>13} {'entrywise':>10} {'certified':>10}")
for fmt in ["q52", "q43", "bfloat16", "fp16", "fp32", "dec:2", "dec:3", "dec:4", "dec:5"]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        op = build_operator(A, part, SchwarzConfig("MS", None, fmt, "mmatrix"))
    rep = check_operator(op)
    # sign-informed rounding never lowers an entry, so F is nonnegative
    fmin = min(s.rounded.F.data.min() for s in op.subs)
    norm = max(s.norm_condition.value for s in rep.subdomains)
    entry = all(s.entrywise_condition.passed for s in rep.subdomains)
    print(f"{fmt:>9} {fmin:>10.2e} {norm:>13.3e} {str(entry):>10} {str(rep.certified()):>10}")
