"""Command-line entry point: ``mpschwarz <verb> [options]``.

Verbs: ``generate`` (matrices), ``solve`` (stationary iteration),
``conditions``, ``gmres``, ``perturb`` and ``plan`` (batch runs).
Exit status is 0 on success, 2 when some plan jobs failed and 1 on invalid
input.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from . import __version__
from .conditions import check_operator
from .decomp import two_domain_partition
from .gmres import GmresConfig, gmres_solve
from .harness import PRESETS, ExperimentPlan, default_rounding, preset_plan, run_plan
from .linalg import lu_factor, solve, write_matrix_market
from .pde import discretize, make_rhs_and_init, problem_metadata
from .perturb import perturbation_report
from .schwarz import SchwarzConfig, build_operator, iterate

EXIT_OK, EXIT_INVALID, EXIT_PARTIAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _common(p, method=True):
    p.add_argument("--problem", type=int, default=1, choices=range(1, 7))
    p.add_argument("--n", type=int, default=50, help="interior grid points per side")
    if method:
        p.add_argument("--method", default="MS", choices=["AS", "dAS", "RAS", "MS"])
    p.add_argument("--format", default="fp64", help="q52, q43, bfloat16, fp16, fp32, fp64 or dec:K")
    p.add_argument("--rounding", choices=["mmatrix", "diag", "nearest"], default=None,
                   help="default: mmatrix for problems 1-3, diag for 4-6")
    p.add_argument("--solve-mode", choices=["rounded-exact", "simulated"], default="rounded-exact")
    p.add_argument("--theta", type=float, default=None)
    p.add_argument("--nu", type=float, default=0.1)
    p.add_argument("--nu-hat", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--max-iters", type=int, default=None)
    p.add_argument("--out", default=None)


def build_parser():
    ap = _Parser(prog="mpschwarz", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="verb", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write a model-problem matrix in Matrix Market format")
    g.add_argument("--problem", type=int, default=1, choices=range(1, 7))
    g.add_argument("--n", type=int, default=50)
    g.add_argument("--out", default=".")

    for verb, text in (("solve", "run a Schwarz iteration"),
                       ("conditions", "check the convergence conditions"),
                       ("gmres", "preconditioned GMRES"),
                       ("perturb", "perturbation analysis (dense, small N)")):
        _common(sub.add_parser(verb, help=text))

    pl = sub.add_parser("plan", help="run an experiment plan")
    src = pl.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(PRESETS, key=lambda s: int(s[3:])))
    src.add_argument("--plan-file", help="JSON file with ExperimentPlan fields")
    pl.add_argument("--problem", type=int, action="append", choices=range(1, 7))
    pl.add_argument("--n", type=int, action="append")
    pl.add_argument("--method", action="append", choices=["AS", "dAS", "RAS", "MS"])
    pl.add_argument("--format", action="append")
    pl.add_argument("--rounding", choices=["mmatrix", "diag", "nearest"])
    pl.add_argument("--solve-mode", choices=["rounded-exact", "simulated"])
    pl.add_argument("--theta", type=float)
    pl.add_argument("--nu", type=float)
    pl.add_argument("--nu-hat", type=float)
    pl.add_argument("--seed", type=int, action="append")
    pl.add_argument("--tol", type=float)
    pl.add_argument("--max-iters", type=int)
    pl.add_argument("--out", default="runs")
    pl.add_argument("--dry-run", action="store_true", help="print the job count and exit")
    return ap


def _config(a) -> SchwarzConfig:
    kw = {}
    if a.max_iters is not None:
        kw["max_iters"] = a.max_iters
    if a.tol is not None:
        kw["stop_tol"] = a.tol
    return SchwarzConfig(a.method, a.theta, a.format, a.rounding or default_rounding(a.problem),
                         a.solve_mode, nu=a.nu, nu_hat=a.nu_hat, **kw)


def _emit(obj, out, name):
    text = json.dumps(obj, indent=2, default=float)
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        (d / name).write_text(text)
    print(text)


def _setup(a):
    A = discretize(a.problem, a.n)
    part = two_domain_partition(a.n)
    return A, part


def cmd_generate(a):
    A = discretize(a.problem, a.n)
    d = Path(a.out)
    d.mkdir(parents=True, exist_ok=True)
    stem = f"problem{a.problem}_n{a.n}"
    write_matrix_market(d / f"{stem}.mtx", A, comment=f"problem {a.problem}, n={a.n}")
    (d / f"{stem}.json").write_text(problem_metadata(a.problem, a.n))
    print(d / f"{stem}.mtx")
    return EXIT_OK


def cmd_solve(a):
    A, part = _setup(a)
    op = build_operator(A, part, _config(a))
    f, u0 = make_rhs_and_init(A.shape[0], a.seed)
    tr = iterate(op, u0, f, solve(lu_factor(A), f))
    if a.out:
        Path(a.out).mkdir(parents=True, exist_ok=True)
        tr.to_csv(Path(a.out) / "trace.csv")
    _emit({**op.metadata(), **tr.summary()}, a.out, "solve.json")
    return EXIT_OK


def cmd_conditions(a):
    A, part = _setup(a)
    op = build_operator(A, part, _config(a))
    _emit(check_operator(op).to_dict(), a.out, "conditions.json")
    return EXIT_OK


def cmd_gmres(a):
    A, part = _setup(a)
    op = build_operator(A, part, _config(a))
    f, _ = make_rhs_and_init(A.shape[0], a.seed)
    res = gmres_solve(A, op, f, GmresConfig(a.tol or 1e-12, a.max_iters or 100))
    if a.out:
        Path(a.out).mkdir(parents=True, exist_ok=True)
        res.to_csv(Path(a.out) / "gmres.csv")
    _emit({"iters": res.iters, "converged": res.converged, "true_residual": res.true_residual,
           "config": op.cfg.to_dict()}, a.out, "gmres.json")
    return EXIT_OK


def cmd_perturb(a):
    A, part = _setup(a)
    mp = build_operator(A, part, _config(a))
    full = build_operator(A, part, SchwarzConfig(a.method, a.theta, "fp64", "nearest", scaling_on=False))
    rep = perturbation_report(full, mp)
    _emit(json.loads(rep.to_json()), a.out, "perturb.json")
    return EXIT_OK


def cmd_plan(a):
    over = dict(problems=a.problem, sizes=a.n, methods=a.method, formats=a.format,
                rounding=a.rounding, solve_mode=a.solve_mode, theta=a.theta, nu=a.nu,
                nu_hat=a.nu_hat, seeds=a.seed, tol=a.tol, max_iters=a.max_iters, out=a.out)
    if a.preset:
        plan = preset_plan(a.preset, **over)
    else:
        base = json.loads(Path(a.plan_file).read_text())
        base.update({k: v for k, v in over.items() if v is not None})
        plan = ExperimentPlan(**base)
    if a.dry_run:
        from .harness import expand_plan
        print(len(expand_plan(plan)))
        return EXIT_OK
    manifest = run_plan(plan)
    failed = [k for k, v in manifest["jobs"].items() if v["status"] != "ok"]
    print(json.dumps({"jobs": len(manifest["jobs"]), "failed": len(failed),
                      "manifest": str(Path(plan.out) / "manifest.json")}))
    return EXIT_PARTIAL if failed else EXIT_OK


_COMMANDS = {"generate": cmd_generate, "solve": cmd_solve, "conditions": cmd_conditions,
             "gmres": cmd_gmres, "perturb": cmd_perturb, "plan": cmd_plan}


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not a.verbose:
        warnings.simplefilter("ignore", RuntimeWarning)
    try:
        return _COMMANDS[a.verb](a)
    except (ValueError, FileNotFoundError, json.JSONDecodeError, TypeError) as exc:
        print(f"mpschwarz: error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
