"""Left-preconditioned full GMRES (no restarts).

Arnoldi with modified Gram-Schmidt on ``v -> M⁻¹ A v`` and Givens rotations
for the small least-squares problem. The stopping test uses the
preconditioned relative residual ``||M⁻¹(f - A x_k)|| / ||M⁻¹ f||``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

__all__ = ["GmresConfig", "GmresResult", "gmres_solve", "residual_check"]


@dataclass(frozen=True)
class GmresConfig:
    tol: float = 1e-12
    max_iters: int = 100
    reorthogonalize: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")


@dataclass
class GmresResult:
    x: np.ndarray
    residual_history: np.ndarray
    iters: int
    converged: bool
    true_residual: float

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "precond_rel_residual"])
            for k, r in enumerate(self.residual_history):
                w.writerow([k, repr(float(r))])


def _as_apply(precond):
    if precond is None:
        return lambda v: v
    if callable(precond):
        return precond
    from .schwarz import apply_preconditioner  # avoids a module cycle

    return lambda v: apply_preconditioner(precond, v)


def residual_check(x, A, f) -> float:
    """True relative residual ``||f - A x|| / ||f||``."""
    f = np.asarray(f, dtype=np.float64)
    nf = np.linalg.norm(f)
    r = np.linalg.norm(f - A @ np.asarray(x, dtype=np.float64))
    return float(r / nf) if nf > 0 else float(r)


def _givens(a, b):
    if b == 0.0:
        return 1.0, 0.0
    r = np.hypot(a, b)
    return a / r, b / r


def gmres_solve(A, precond, f, cfg: GmresConfig | None = None) -> GmresResult:
    """Solve ``A x = f`` from ``x0 = 0`` with left preconditioning.

    Parameters
    ----------
    A : sparse matrix or ndarray
    precond : SchwarzOperator, callable ``v -> M⁻¹ v``, or None
    f : ndarray
    cfg : GmresConfig

    Returns
    -------
    GmresResult
        ``residual_history[k]`` is the preconditioned relative residual after
        ``k`` iterations (entry 0 is 1).
    """
    cfg = cfg or GmresConfig()
    Minv = _as_apply(precond)
    f = np.asarray(f, dtype=np.float64)
    N = f.size
    r0 = Minv(f)
    beta = float(np.linalg.norm(r0))
    if beta == 0.0:
        x = np.zeros(N)
        return GmresResult(x, np.array([0.0]), 0, True, residual_check(x, A, f))
    m = min(cfg.max_iters, N)
    V = np.zeros((m + 1, N))
    H = np.zeros((m + 1, m))
    cs, sn = np.zeros(m), np.zeros(m)
    g = np.zeros(m + 1)
    g[0] = beta
    V[0] = r0 / beta
    hist = [1.0]
    converged = False
    k = 0
    for j in range(m):
        w = Minv(A @ V[j])
        w0 = float(np.linalg.norm(w))
        passes = 2 if cfg.reorthogonalize else 1
        for _ in range(passes):
            for i in range(j + 1):
                h = float(V[i] @ w)
                H[i, j] += h
                w = w - h * V[i]
        hn = float(np.linalg.norm(w))
        H[j + 1, j] = hn
        for i in range(j):
            a, b = H[i, j], H[i + 1, j]
            H[i, j] = cs[i] * a + sn[i] * b
            H[i + 1, j] = -sn[i] * a + cs[i] * b
        cs[j], sn[j] = _givens(H[j, j], H[j + 1, j])
        H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        k = j + 1
        rel = abs(g[j + 1]) / beta
        hist.append(rel)
        # happy breakdown: the Krylov space is invariant, x_k is exact
        breakdown = hn <= 1e-14 * w0
        if rel <= cfg.tol or breakdown:
            converged = True
            break
        V[j + 1] = w / hn
    y = np.linalg.solve(np.triu(H[:k, :k]), g[:k]) if k else np.zeros(0)
    x = V[:k].T @ y
    return GmresResult(x, np.array(hist), k, converged, residual_check(x, A, f))
