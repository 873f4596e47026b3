"""Experiment plans: job expansion, execution and output bookkeeping.

A plan is a cartesian product of problems, grid sizes, methods, formats and
seeds. Every combination becomes a job keyed by a SHA-256 hash of its
canonical JSON parameters; a job whose outputs are already listed in the
manifest is skipped on re-run.
"""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import logging
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .conditions import check_operator
from .decomp import two_domain_partition
from .fpsim import TABLE_FORMATS, get_format
from .gmres import GmresConfig, gmres_solve
from .linalg import lu_factor, solve
from .pde import GridSpec, N_TO_N, discretize, get_problem, make_rhs_and_init
from .perturb import gmres_bound_curve, perturbation_report, write_bound_csv
from .schwarz import SchwarzConfig, build_operator, iterate, sweep

__all__ = [
    "ANALYSES",
    "ExperimentPlan",
    "Job",
    "expand_plan",
    "run_job",
    "run_plan",
    "export_error_snapshot",
    "PRESETS",
    "preset_plan",
    "default_rounding",
    "summarize",
]

log = logging.getLogger(__name__)

ANALYSES = ("iterate", "conditions", "gmres", "perturb", "snapshots")
DECIMAL_FORMATS = tuple(f"dec:{d}" for d in range(1, 17))
SIZES = tuple(N_TO_N)


def default_rounding(problem) -> str:
    """Sign-informed round-up for the nonsymmetric problems, diagonal-keeping otherwise."""
    return "diag" if get_problem(problem).symmetric else "mmatrix"


@dataclass
class ExperimentPlan:
    problems: list = field(default_factory=list)
    sizes: list = field(default_factory=lambda: [50])
    methods: list = field(default_factory=lambda: ["MS"])
    formats: list = field(default_factory=lambda: ["fp64"])
    rounding: str | None = None
    solve_mode: str = "rounded-exact"
    seeds: list = field(default_factory=lambda: [0])
    out: str = "runs"
    analyses: list = field(default_factory=lambda: ["iterate", "conditions"])
    theta: float | None = None
    nu: float = 0.1
    nu_hat: float = 0.1
    tol: float = 1e-12
    max_iters: int = 500
    snapshot_iters: list = field(default_factory=lambda: [1, 2, 3])
    overlap_lines: int = 1

    def __post_init__(self):
        bad = set(self.analyses) - set(ANALYSES)
        if bad:
            raise ValueError(f"unknown analyses: {sorted(bad)}")
        for f in self.formats:
            get_format(f)
        for p in self.problems:
            get_problem(p)

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


@dataclass(frozen=True)
class Job:
    problem: int
    n: int
    method: str
    fmt: str
    rounding: str
    solve_mode: str
    seed: int
    analyses: tuple
    theta: float | None
    nu: float
    nu_hat: float
    tol: float
    max_iters: int
    snapshot_iters: tuple
    overlap_lines: int

    def params(self):
        d = asdict(self)
        d["analyses"] = list(self.analyses)
        d["snapshot_iters"] = list(self.snapshot_iters)
        return d

    @property
    def key(self):
        blob = json.dumps(self.params(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def config(self) -> SchwarzConfig:
        return SchwarzConfig(self.method, self.theta, self.fmt, self.rounding, self.solve_mode,
                             nu=self.nu, nu_hat=self.nu_hat, max_iters=self.max_iters,
                             stop_tol=self.tol)


def expand_plan(plan: ExperimentPlan):
    """All jobs of ``plan`` in a deterministic order."""
    jobs = []
    for p, n, m, f, s in itertools.product(plan.problems, plan.sizes, plan.methods,
                                           plan.formats, plan.seeds):
        jobs.append(Job(int(p), int(n), str(m), get_format(f).name,
                        plan.rounding or default_rounding(p), plan.solve_mode, int(s),
                        tuple(plan.analyses), plan.theta, plan.nu, plan.nu_hat, plan.tol,
                        plan.max_iters, tuple(plan.snapshot_iters), plan.overlap_lines))
    return jobs


def export_error_snapshot(op, u0, f, u_true, iters, out_dir, stem="error"):
    """Write the error after each listed sweep as an ``n x n`` CSV grid.

    Row ``r``, column ``c`` of a grid holds the error at ``((c+1) h, (r+1) h)``.

    Returns
    -------
    list of Path
    """
    iters = sorted(set(int(k) for k in iters))
    if not iters or iters[0] < 0:
        raise ValueError("iterations must be nonnegative")
    grid = GridSpec.from_N(op.N)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    u = np.array(u0, dtype=np.float64)
    paths = []
    for k in range(iters[-1] + 1):
        if k > 0:
            u = sweep(op, u, f)
        if k in iters:
            path = out_dir / f"{stem}_iter{k}.csv"
            np.savetxt(path, grid.to_grid(u - u_true), delimiter=",", fmt="%.17g")
            paths.append(path)
    return paths


def run_job(job: Job, out_dir) -> list:
    """Execute one job and return the written files."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    A = discretize(job.problem, job.n)
    part = two_domain_partition(job.n, job.overlap_lines)
    f, u0 = make_rhs_and_init(A.shape[0], job.seed)
    u_true = solve(lu_factor(A), f)
    cfg = job.config()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        op = build_operator(A, part, cfg)
    files = []
    meta = {"params": job.params(), "key": job.key, **op.metadata(),
            "warnings": [str(w.message) for w in caught]}
    report = None
    if "conditions" in job.analyses:
        report = check_operator(op)
        meta["conditions"] = report.to_dict()
    if "iterate" in job.analyses:
        tr = iterate(op, u0, f, u_true)
        path = out_dir / "trace.csv"
        tr.to_csv(path)
        files.append(path)
        meta["trace"] = tr.summary()
        meta["rho_conv"] = tr.rho_conv
    if "gmres" in job.analyses:
        res = gmres_solve(A, op, f, GmresConfig(job.tol, 100))
        path = out_dir / "gmres.csv"
        res.to_csv(path)
        files.append(path)
        meta["gmres"] = {"iters": res.iters, "converged": res.converged,
                         "true_residual": res.true_residual}
    if "perturb" in job.analyses:
        full = build_operator(A, part, SchwarzConfig(job.method, job.theta, "fp64", "nearest",
                                                     scaling_on=False))
        pr = perturbation_report(full, op)
        path = out_dir / "perturb.json"
        path.write_text(pr.to_json(indent=2))
        files.append(path)
        path = out_dir / "gmres_bound.csv"
        write_bound_csv(gmres_bound_curve(full, op, f, GmresConfig(job.tol, 100)), path)
        files.append(path)
    if "snapshots" in job.analyses:
        files.extend(export_error_snapshot(op, u0, f, u_true, job.snapshot_iters, out_dir))
    path = out_dir / "conditions.json"
    path.write_text(json.dumps(meta, indent=2, default=float))
    files.append(path)
    return files


SUMMARY_FIELDS = ["key", "problem", "n", "N", "method", "fmt", "rounding", "solve_mode", "seed",
                  "status", "certified", "rho_conv", "iterations", "converged",
                  "gmres_iters", "gmres_converged"]


def summarize(out) -> Path:
    """Write ``summary.csv``: one row per job of the manifest in ``out``.

    ``certified`` is the filled-marker verdict (norm and entrywise conditions,
    plus the sufficient eigenvalue condition for the symmetric problems).
    """
    out = Path(out)
    manifest = _load_manifest(out / "manifest.json")
    path = out / "summary.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, SUMMARY_FIELDS)
        w.writeheader()
        for key, entry in manifest["jobs"].items():
            p = entry["params"]
            row = {"key": key, "problem": p["problem"], "n": p["n"], "N": p["n"] ** 2,
                   "method": p["method"], "fmt": p["fmt"], "rounding": p["rounding"],
                   "solve_mode": p["solve_mode"], "seed": p["seed"], "status": entry["status"]}
            meta_path = out / key / "conditions.json"
            if entry["status"] == "ok" and meta_path.exists():
                meta = json.loads(meta_path.read_text())
                cond = meta.get("conditions")
                if cond is not None:
                    row["certified"] = int(_certified(cond, get_problem(p["problem"]).symmetric))
                tr = meta.get("trace")
                if tr is not None:
                    row.update(rho_conv=tr["rho_conv"], iterations=tr["iterations"],
                               converged=int(tr["converged"]))
                gm = meta.get("gmres")
                if gm is not None:
                    row.update(gmres_iters=gm["iters"], gmres_converged=int(gm["converged"]))
            w.writerow(row)
    return path


def _certified(cond: dict, symmetric: bool) -> bool:
    ok = True
    for s in cond["subdomains"]:
        ok &= s["norm_condition"]["status"] == "passed"
        ok &= s["entrywise_condition"]["status"] == "passed"
        if symmetric:
            ok &= s["spd"] is not None and s["spd"]["eig_sufficient"]["status"] == "passed"
    return bool(ok)


def _load_manifest(path):
    if path.exists():
        return json.loads(path.read_text())
    return {"version": __version__, "jobs": {}}


def run_plan(plan: ExperimentPlan, workers=1) -> dict:
    """Run every job of ``plan``; failures are recorded, not raised.

    The manifest (``manifest.json`` in ``plan.out``) maps each job hash to its
    parameters, status and output files. Jobs already marked ``ok`` are not
    rerun. ``workers`` is accepted for interface stability; jobs run
    sequentially here, which keeps manifest writes trivially serialized.
    """
    out = Path(plan.out)
    out.mkdir(parents=True, exist_ok=True)
    mpath = out / "manifest.json"
    manifest = _load_manifest(mpath)
    manifest["version"] = __version__
    for job in expand_plan(plan):
        entry = manifest["jobs"].get(job.key)
        if entry and entry.get("status") == "ok":
            continue
        jdir = out / job.key
        try:
            files = run_job(job, jdir)
            entry = {"params": job.params(), "status": "ok",
                     "files": sorted(str(p.relative_to(out)) for p in files)}
        except Exception as exc:  # recorded per job
            log.warning("job %s failed: %s", job.key, exc)
            entry = {"params": job.params(), "status": "failed", "error": f"{type(exc).__name__}: {exc}",
                     "files": []}
        manifest["jobs"][job.key] = entry
        mpath.write_text(json.dumps(manifest, indent=2))
    manifest["summary"] = summarize(out).name
    mpath.write_text(json.dumps(manifest, indent=2))
    return manifest


_NONSYM = [1, 2, 3]
_SYM = [4, 5, 6]
_METHODS = ["MS", "dAS", "RAS", "AS"]

#: Named sweep presets fig1..fig10. Binary-format sweeps use the table formats, decimal sweeps
#: dec:1..16; size sweeps use ``n`` in ``SIZES``.
PRESETS = {
    "fig1": dict(problems=_NONSYM, sizes=[50], methods=_METHODS, formats=list(TABLE_FORMATS),
                 analyses=["iterate", "conditions"]),
    "fig2": dict(problems=_NONSYM, sizes=[50], methods=_METHODS, formats=list(DECIMAL_FORMATS),
                 analyses=["iterate", "conditions"]),
    "fig3": dict(problems=[1], sizes=[50], methods=["MS"], formats=["q43", "bfloat16", "fp16"],
                 analyses=["snapshots"]),
    "fig4": dict(problems=_NONSYM, sizes=list(SIZES), methods=["MS"], formats=list(DECIMAL_FORMATS),
                 analyses=["iterate", "conditions"]),
    "fig5": dict(problems=_NONSYM, sizes=[50], methods=["MS", "dAS", "RAS"],
                 formats=list(DECIMAL_FORMATS), analyses=["gmres"]),
    "fig6": dict(problems=_SYM, sizes=[50], methods=_METHODS, formats=list(TABLE_FORMATS),
                 analyses=["iterate", "conditions"]),
    "fig7": dict(problems=_SYM, sizes=[50], methods=_METHODS, formats=list(DECIMAL_FORMATS),
                 analyses=["iterate", "conditions"]),
    "fig8": dict(problems=[5], sizes=[50], methods=["MS"], formats=["q43", "bfloat16", "fp16"],
                 analyses=["snapshots"]),
    "fig9": dict(problems=_SYM, sizes=list(SIZES), methods=["MS"], formats=list(DECIMAL_FORMATS),
                 analyses=["iterate", "conditions"]),
    "fig10": dict(problems=_SYM, sizes=[50], methods=["MS", "dAS", "RAS"],
                  formats=list(DECIMAL_FORMATS), analyses=["gmres"]),
}


def preset_plan(name, **overrides) -> ExperimentPlan:
    try:
        base = dict(PRESETS[name])
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    base.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentPlan(**base)
