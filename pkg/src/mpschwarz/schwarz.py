"""Schwarz iterations with multiprecision subdomain solves.

Each subdomain matrix ``A_i`` is rescaled, rounded to the solve format and
factorized once. A subdomain solve then rescales the residual, solves with
the rounded matrix and maps the result back, which realizes ``Ã_i⁻¹`` with
``Ã_i = mu⁻¹ D_r⁻¹ calÃ_i D_c⁻¹``.

Two solve modes exist. ``"rounded-exact"`` applies working-precision factors
of the rounded matrix, so the preconditioner is a fixed linear operator.
``"simulated"`` additionally rounds the scaled right-hand side and every flop
of the factorization and triangular solves to the solve format.
"""

from __future__ import annotations

import csv
import enum
import time
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .decomp import Partition, subdomain_blocks
from .fpsim import FloatFormat, RoundMode, get_format, round_array
from .linalg import DENSE_CAP, CapExceededError, LUFactors, SingularMatrixError, as_csr, lu_factor, solve
from .rounding import RoundedSubdomain, RoundingKind, apply_rounding
from .scaling import ScalingData, identity_scaling, scale_general, scale_rhs, scale_symmetric, unscale_solution

__all__ = [
    "Variant",
    "SolveMode",
    "SchwarzConfig",
    "ScaledSubdomain",
    "SchwarzOperator",
    "SubdomainBuildError",
    "IterationTrace",
    "build_operator",
    "subdomain_solve",
    "sweep",
    "iterate",
    "apply_preconditioner",
    "assemble_dense_iteration_matrix",
    "assemble_dense_preconditioned",
    "estimate_rho_conv",
]

DIVERGENCE_FACTOR = 1e6


class Variant(str, enum.Enum):
    AS = "AS"
    DAS = "dAS"
    RAS = "RAS"
    MS = "MS"


class SolveMode(str, enum.Enum):
    ROUNDED_EXACT = "rounded-exact"
    SIMULATED = "simulated"


@dataclass
class SchwarzConfig:
    """Method, precision and stopping parameters.

    ``theta`` defaults to 0.49 for dAS (below ``1/q`` for two colours) and
    to 1 otherwise. ``symmetric_scaling=None`` picks the symmetric
    equilibration exactly when the diagonal-keeping rounding is used.
    """

    variant: Variant = Variant.MS
    theta: float | None = None
    solve_fmt: object = "fp64"
    rounding: RoundingKind = RoundingKind.MMATRIX_UP
    solve_mode: SolveMode = SolveMode.ROUNDED_EXACT
    scaling_on: bool = True
    symmetric_scaling: bool | None = None
    nu: float = 0.1
    nu_hat: float = 0.1
    max_iters: int = 500
    stop_tol: float = 1e-12

    def __post_init__(self):
        self.variant = Variant(self.variant)
        self.rounding = RoundingKind(self.rounding)
        self.solve_mode = SolveMode(self.solve_mode)
        self.solve_fmt = get_format(self.solve_fmt)
        if self.theta is None:
            self.theta = 0.49 if self.variant is Variant.DAS else 1.0
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if self.symmetric_scaling is None:
            self.symmetric_scaling = self.rounding is RoundingKind.DIAG_EXACT
        if self.max_iters < 0 or not self.stop_tol > 0:
            raise ValueError("max_iters must be >= 0 and stop_tol > 0")

    def to_dict(self):
        d = asdict(self)
        d["variant"] = self.variant.value
        d["rounding"] = self.rounding.value
        d["solve_mode"] = self.solve_mode.value
        d["solve_fmt"] = self.solve_fmt.name
        return d


@dataclass
class ScaledSubdomain:
    """Everything needed to apply ``Ã_i⁻¹`` for one subdomain."""

    A_i: object
    scaling: ScalingData
    rounded: RoundedSubdomain
    factors: LUFactors


class SubdomainBuildError(RuntimeError):
    def __init__(self, failures):
        self.failures = failures
        super().__init__("; ".join(f"subdomain {i}: {msg}" for i, msg in failures))


@dataclass
class SchwarzOperator:
    A: object
    part: Partition
    cfg: SchwarzConfig
    subs: list
    overflow_events: int = 0
    notes: list = field(default_factory=list)

    @property
    def N(self):
        return self.part.N

    @property
    def p(self):
        return self.part.p

    def metadata(self):
        return {"config": self.cfg.to_dict(), "p": self.p, "q": self.part.q,
                "subdomain_sizes": self.part.sizes, "overflow_events": self.overflow_events,
                "notes": list(self.notes), "partition": self.part.meta or {}}


def build_operator(A, part: Partition, cfg: SchwarzConfig | None = None, rounder=None) -> SchwarzOperator:
    """Scale, round and factorize every subdomain matrix.

    Parameters
    ----------
    rounder : callable, optional
        ``rounder(calA, fmt) -> RoundedSubdomain`` replacing the configured
        rounding routine.

    Raises
    ------
    SubdomainBuildError
        One or more rounded subdomain matrices could not be factorized.
    """
    cfg = cfg or SchwarzConfig()
    A = as_csr(A)
    fmt = cfg.solve_fmt
    if cfg.variant is Variant.DAS and cfg.theta >= 1.0 / part.q:
        warnings.warn(f"theta={cfg.theta} >= 1/q={1 / part.q:g}; convergence theory does not apply",
                      RuntimeWarning, stacklevel=2)
    subs, failures, notes = [], [], []
    overflow = 0
    for i in range(part.p):
        A_i = subdomain_blocks(A, part, i).A_i
        if not cfg.scaling_on:
            sd, calA = identity_scaling(A_i.shape[0], cfg.nu_hat), A_i
        elif cfg.symmetric_scaling:
            sd, calA = scale_symmetric(A_i, fmt, cfg.nu, cfg.nu_hat)
        else:
            sd, calA = scale_general(A_i, fmt, cfg.nu, cfg.nu_hat)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            rs = rounder(calA, fmt) if rounder is not None else apply_rounding(cfg.rounding, calA, fmt)
        overflow += rs.stats.overflow
        notes.extend(f"subdomain {i}: {w}" for w in rs.warnings)
        try:
            if cfg.solve_mode is SolveMode.SIMULATED:
                fac = lu_factor(rs.A_rounded, fmt)
            else:
                fac = lu_factor(rs.A_rounded)
        except (SingularMatrixError, FloatingPointError, CapExceededError) as exc:
            failures.append((i, str(exc)))
            continue
        subs.append(ScaledSubdomain(A_i, sd, rs, fac))
    if failures:
        raise SubdomainBuildError(failures)
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return SchwarzOperator(A, part, cfg, subs, overflow, notes)


def subdomain_solve(op: SchwarzOperator, i, g):
    """Apply ``Ã_i⁻¹`` to a subdomain vector or ``(N_i, k)`` block."""
    s = op.subs[i]
    g = np.asarray(g, dtype=np.float64)
    if g.shape[0] != s.A_i.shape[0]:
        raise ValueError(f"expected {s.A_i.shape[0]} rows, got {g.shape[0]}")
    b_hat, nb = scale_rhs(g, s.scaling)
    if not np.any(nb):
        return np.zeros_like(g)
    if op.cfg.solve_mode is SolveMode.SIMULATED:
        b_hat, _ = round_array(b_hat, op.cfg.solve_fmt, RoundMode.NEAREST)
    v_hat = solve(s.factors, b_hat)
    if not np.all(np.isfinite(v_hat)):
        raise FloatingPointError(f"overflow in subdomain {i} solve ({op.cfg.solve_fmt.name})")
    return unscale_solution(v_hat, s.scaling, nb)


def sweep(op: SchwarzOperator, u, f):
    """One iteration ``u + correction(f - A u)`` of the configured method.

    ``u`` and ``f`` may be vectors or ``(N, k)`` blocks.
    """
    u = np.asarray(u, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    if u.shape != f.shape or u.shape[0] != op.N:
        raise ValueError(f"shape mismatch: u {u.shape}, f {f.shape}, N={op.N}")
    A, part = op.A, op.part
    variant = op.cfg.variant
    if variant is Variant.MS:
        u = u.copy()
        for i in range(part.p):
            r = f - A @ u
            u += part.prolong(subdomain_solve(op, i, part.restrict(r, i)), i)
        return u
    r = f - A @ u
    restricted = variant is Variant.RAS
    theta = op.cfg.theta if variant is Variant.DAS else 1.0
    corr = np.zeros_like(u)
    for i in range(part.p):
        corr += part.prolong(subdomain_solve(op, i, part.restrict(r, i)), i, restricted)
    return u + theta * corr


def apply_preconditioner(op: SchwarzOperator, v):
    """``M̃⁻¹ v``, realized as one sweep from zero with right-hand side ``v``."""
    v = np.asarray(v, dtype=np.float64)
    return sweep(op, np.zeros_like(v), v)


def assemble_dense_iteration_matrix(op: SchwarzOperator, cap=DENSE_CAP):
    """Dense ``T̃`` with columns ``sweep(e_j, 0)``."""
    if op.N > cap:
        raise CapExceededError(f"N={op.N} exceeds dense cap {cap}")
    eye = np.eye(op.N)
    return sweep(op, eye, np.zeros_like(eye))


def assemble_dense_preconditioned(op: SchwarzOperator, cap=DENSE_CAP):
    """Dense ``M̃⁻¹ A`` (equal to ``I - T̃``)."""
    if op.N > cap:
        raise CapExceededError(f"N={op.N} exceeds dense cap {cap}")
    return apply_preconditioner(op, op.A.toarray())


def estimate_rho_conv(norms, skip=10, window=40, floor=1e-9):
    """Geometric mean of consecutive norm ratios past the transient.

    The trace is first cut at the first iterate whose norm is at most
    ``floor`` times the initial one, so a working-precision plateau does not
    count. Of the remaining ``k`` ratios, those from
    ``max(skip, k - min(window, k // 2))`` on are averaged; short traces fall
    back to all ratios.
    """
    m = np.asarray(norms, dtype=float)
    if m.size and m[0] > 0:
        below = np.flatnonzero(m <= floor * m[0])
        if below.size:
            m = m[:below[0] + 1]
    k = m.size - 1
    if k < 1:
        return float("nan")
    start = max(skip, k - min(window, k // 2))
    if start >= k:
        start = 0
    seg = m[start:]
    a, b = seg[:-1], seg[1:]
    ok = (a > 0) & (b > 0)
    if not np.any(ok):
        return 0.0
    return float(np.exp(np.mean(np.log(b[ok] / a[ok]))))


@dataclass
class IterationTrace:
    """Per-iteration norms of one stationary run.

    Index ``k`` of each array refers to iterate ``u^(k)``; ``err_2norm`` is
    NaN when no reference solution was given.
    """

    err_2norm: np.ndarray
    res_2norm: np.ndarray
    wall_time: np.ndarray
    rho_conv: float
    iterations: int
    converged: bool
    diverged: bool = False
    snapshots: dict = field(default_factory=dict)
    condition_report: str | None = None
    final_u: np.ndarray | None = None

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "err_2norm", "res_2norm"])
            for k in range(self.iterations + 1):
                w.writerow([k, repr(float(self.err_2norm[k])), repr(float(self.res_2norm[k]))])

    def summary(self):
        return {"rho_conv": self.rho_conv, "iterations": self.iterations,
                "converged": self.converged, "diverged": self.diverged,
                "condition_report": self.condition_report}


def iterate(op: SchwarzOperator, u0, f, u_true=None, max_iters=None, stop_tol=None,
            keep=()) -> IterationTrace:
    """Run sweeps until the relative error (or residual) drops below ``stop_tol``.

    The error is monitored when ``u_true`` is given, the residual otherwise.
    Error vectors at the iterations listed in ``keep`` are stored in
    ``trace.snapshots``.
    """
    max_iters = op.cfg.max_iters if max_iters is None else max_iters
    stop_tol = op.cfg.stop_tol if stop_tol is None else stop_tol
    A = op.A
    u = np.array(u0, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    keep = set(int(k) for k in keep)
    errs, ress, times = [], [], []
    snaps = {}
    t0 = time.perf_counter()

    def record(k, u):
        res = float(np.linalg.norm(f - A @ u))
        if u_true is not None:
            e = u - u_true
            errs.append(float(np.linalg.norm(e)))
            if k in keep:
                snaps[k] = e.copy()
        else:
            errs.append(float("nan"))
        ress.append(res)
        times.append(time.perf_counter() - t0)
        return errs[-1] if u_true is not None else res

    m0 = record(0, u)
    best = m0
    converged = m0 == 0.0
    diverged = False
    k = 0
    while not converged and k < max_iters:
        u = sweep(op, u, f)
        k += 1
        m = record(k, u)
        if not np.isfinite(m) or m > DIVERGENCE_FACTOR * best:
            diverged = True
            break
        best = min(best, m)
        if m <= stop_tol * m0:
            converged = True
    mon = np.array(errs if u_true is not None else ress)
    return IterationTrace(np.array(errs), np.array(ress), np.array(times),
                          estimate_rho_conv(mon), k, converged, diverged, snaps, final_u=u)
