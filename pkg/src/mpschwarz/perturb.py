"""Error matrices between full-precision and multiprecision preconditioners.

With ``G_i = calA_i⁻¹ F_i`` the rounded subdomain inverse factors as
``Ã_i⁻¹ = (I + calE_i) A_i⁻¹`` where
``calE_i = D_c (-(I + G_i)⁻¹ G_i) D_c⁻¹``. The error of the preconditioned
operator ``E = M̃⁻¹A - M⁻¹A`` is probed column by column and compared with
the structural formula built from the ``calE_i``. All objects are dense and
cap-gated.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .gmres import GmresConfig, gmres_solve
from .linalg import CapExceededError
from .schwarz import SchwarzOperator, Variant, assemble_dense_preconditioned

__all__ = [
    "PERTURB_CAP",
    "PerturbReport",
    "subdomain_error_matrix",
    "assemble_E_additive",
    "structural_E_additive",
    "decompose_E_ms",
    "additive_bound",
    "fit_gmres_rate",
    "check_gmres_linear_bound",
    "envelope_gmres_rate",
    "gmres_bound_curve",
    "write_bound_csv",
    "perturbation_report",
]

#: Default size cap for the dense analysis objects.
PERTURB_CAP = 400


def _cap(op, cap):
    if op.N > cap:
        raise CapExceededError(f"N={op.N} exceeds perturbation cap {cap}")


def _dense(M):
    return M.toarray() if hasattr(M, "toarray") else np.asarray(M, dtype=np.float64)


def subdomain_error_matrix(sub):
    """Return ``(calE_i, ||G_i||_2, kappa(D_c))`` for one built subdomain."""
    calA = _dense(sub.rounded.A_scaled)
    G = np.linalg.solve(calA, _dense(sub.rounded.F))
    n = G.shape[0]
    inner = -np.linalg.solve(np.eye(n) + G, G)
    d = sub.scaling.D_c
    calE = (d[:, None] * inner) / d[None, :]
    return calE, float(np.linalg.norm(G, 2)), float(d.max() / d.min())


def assemble_E_additive(op_full: SchwarzOperator, op_mp: SchwarzOperator, cap=PERTURB_CAP):
    """Probed ``E = M̃⁻¹A - M⁻¹A`` (any variant)."""
    _cap(op_mp, cap)
    return assemble_dense_preconditioned(op_mp, cap) - assemble_dense_preconditioned(op_full, cap)


def _local_products(op):
    """``A_i⁻¹ R_i A`` for every subdomain, dense."""
    A = _dense(op.A)
    return [np.linalg.solve(_dense(s.A_i), A[op.part.W[i]]) for i, s in enumerate(op.subs)]


def structural_E_additive(op_mp: SchwarzOperator, cap=PERTURB_CAP):
    """``theta * sum_i Rᵢᵀ calE_i A_i⁻¹ R_i A`` (restricted scatter for RAS)."""
    _cap(op_mp, cap)
    variant = op_mp.cfg.variant
    if variant is Variant.MS:
        raise ValueError("use decompose_E_ms for the multiplicative method")
    theta = op_mp.cfg.theta if variant is Variant.DAS else 1.0
    part = op_mp.part
    E = np.zeros((op_mp.N, op_mp.N))
    for i, (s, B) in enumerate(zip(op_mp.subs, _local_products(op_mp))):
        calE, _, _ = subdomain_error_matrix(s)
        E += part.prolong(calE @ B, i, restricted=variant is Variant.RAS)
    return theta * E


def decompose_E_ms(op_full: SchwarzOperator, op_mp: SchwarzOperator, cap=PERTURB_CAP):
    """Split the two-subdomain multiplicative error into three terms.

    With ``P_i = Rᵢᵀ A_i⁻¹ R_i A`` and ``Q_i = Rᵢᵀ calE_i A_i⁻¹ R_i A``,
    ``M̃⁻¹A = M⁻¹A + G1 + G2 + G3`` where ``G1 = (I - P2) Q1``,
    ``G2 = Q2 (I - P1)`` and ``G3 = -Q2 Q1``.

    Returns
    -------
    dict with ``G1``, ``G2``, ``G3`` and the probed ``E``.
    """
    _cap(op_mp, cap)
    if op_mp.p != 2:
        raise ValueError("the three-term split needs exactly two subdomains")
    part = op_mp.part
    N = op_mp.N
    I = np.eye(N)
    Bs = _local_products(op_mp)
    P = [part.prolong(B, i) for i, B in enumerate(Bs)]
    Q = [part.prolong(subdomain_error_matrix(s)[0] @ B, i) for i, (s, B) in enumerate(zip(op_mp.subs, Bs))]
    G1 = (I - P[1]) @ Q[0]
    G2 = Q[1] @ (I - P[0])
    G3 = -Q[1] @ Q[0]
    return {"G1": G1, "G2": G2, "G3": G3, "E": assemble_E_additive(op_full, op_mp, cap)}


def additive_bound(op_full: SchwarzOperator, op_mp: SchwarzOperator, cap=PERTURB_CAP):
    """``2 eps kappa(D_c) ||M⁻¹A||_2`` with ``eps = max_i ||G_i||_2``.

    Returns ``(bound, eps, kappa, norm_MinvA)``.
    """
    _cap(op_mp, cap)
    parts = [subdomain_error_matrix(s) for s in op_mp.subs]
    eps = max(p[1] for p in parts)
    kappa = max(p[2] for p in parts)
    nrm = float(np.linalg.norm(assemble_dense_preconditioned(op_full, cap), 2))
    return 2.0 * eps * kappa * nrm, eps, kappa, nrm


def fit_gmres_rate(residuals, lo=1e-9, hi=1e-2) -> float:
    """Least-squares slope of ``log r_k`` over the iterations with ``r_k`` in ``[lo, hi]``."""
    r = np.asarray(residuals, dtype=float)
    k = np.arange(r.size)
    sel = (r >= lo) & (r <= hi)
    if np.count_nonzero(sel) < 2:
        sel = r > 0
    if np.count_nonzero(sel) < 2:
        return 0.0
    slope = np.polyfit(k[sel], np.log(r[sel]), 1)[0]
    return float(np.exp(slope))


def envelope_gmres_rate(residuals) -> float:
    """Smallest ``rho`` with ``r_k / r_0 <= rho**k`` for every recorded ``k >= 1``.

    This is the linear-convergence factor the bound assumes for the
    full-precision run.
    """
    r = np.asarray(residuals, dtype=float)
    r = r / r[0]
    k = np.arange(1, r.size)
    pos = r[1:] > 0
    if not np.any(pos):
        return 0.0
    return float(np.max(r[1:][pos] ** (1.0 / k[pos])))


def check_gmres_linear_bound(residuals_mp, rho_full, AinvM_norm, E_fro):
    """Evaluate ``(rho + (1 + rho) ||A⁻¹M|| ||E||_F / sqrt(k))^k`` for ``k >= 1``.

    Returns a dict with the bound, the observed relative residuals and a
    per-``k`` ``holds`` flag. The bound may exceed one and be vacuous.
    """
    r = np.asarray(residuals_mp, dtype=float)
    r = r / r[0] if r[0] > 0 else r
    k = np.arange(1, r.size)
    bound = (rho_full + (1.0 + rho_full) * AinvM_norm * E_fro / np.sqrt(k)) ** k
    return {"k": k, "bound": bound, "actual": r[1:], "holds": r[1:] <= bound}


def gmres_bound_curve(op_full: SchwarzOperator, op_mp: SchwarzOperator, f, cfg: GmresConfig | None = None,
                      cap=PERTURB_CAP, rate="envelope") -> dict:
    """GMRES residual bound of the multiprecision run against its actual residuals.

    ``rho`` comes from the full-precision run, either as the linear envelope
    (``rate="envelope"``, see :func:`envelope_gmres_rate`) or as the
    least-squares slope (``rate="fit"``, see :func:`fit_gmres_rate`).
    ``||A⁻¹M||_2`` and ``||E||_F`` come from dense assembly.
    """
    if rate not in ("envelope", "fit"):
        raise ValueError(f"unknown rate {rate!r}")
    _cap(op_mp, cap)
    cfg = cfg or GmresConfig()
    full = gmres_solve(op_full.A, op_full, f, cfg)
    mp = gmres_solve(op_mp.A, op_mp, f, cfg)
    rho = (envelope_gmres_rate if rate == "envelope" else fit_gmres_rate)(full.residual_history)
    MinvA = assemble_dense_preconditioned(op_full, cap)
    AinvM = float(np.linalg.norm(np.linalg.inv(MinvA), 2))
    E_fro = float(np.linalg.norm(assemble_E_additive(op_full, op_mp, cap), "fro"))
    out = check_gmres_linear_bound(mp.residual_history, rho, AinvM, E_fro)
    out.update(rho=rho, AinvM_norm=AinvM, E_fro=E_fro)
    return out


def write_bound_csv(curve: dict, path):
    """Write ``k, bound, actual, holds`` rows of a bound curve."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "bound", "actual", "holds"])
        for row in zip(curve["k"], curve["bound"], curve["actual"], curve["holds"]):
            w.writerow([int(row[0]), repr(float(row[1])), repr(float(row[2])), int(bool(row[3]))])


@dataclass
class PerturbReport:
    variant: str
    fmt: str
    eps_i: list
    calE_norms: list
    kappa_Dc: list
    E_norm: float
    bound: float | None
    bound_holds: bool | None
    formula_gap: float | None = None
    ms_terms: dict = field(default_factory=dict)

    def to_json(self, **kw):
        return json.dumps(asdict(self), **kw)


def perturbation_report(op_full: SchwarzOperator, op_mp: SchwarzOperator, cap=PERTURB_CAP) -> PerturbReport:
    """Norms of the error matrices and the additive bound (when ``eps < 1/2``)."""
    parts = [subdomain_error_matrix(s) for s in op_mp.subs]
    eps = [p[1] for p in parts]
    E_probe = assemble_E_additive(op_full, op_mp, cap)
    rep = PerturbReport(op_mp.cfg.variant.value, op_mp.cfg.solve_fmt.name, eps,
                        [float(np.linalg.norm(p[0], 2)) for p in parts], [p[2] for p in parts],
                        float(np.linalg.norm(E_probe, 2)), None, None)
    if op_mp.cfg.variant is Variant.MS:
        if op_mp.p == 2:
            d = decompose_E_ms(op_full, op_mp, cap)
            rep.ms_terms = {k: float(np.linalg.norm(d[k], 2)) for k in ("G1", "G2", "G3")}
            rep.formula_gap = float(np.abs(d["G1"] + d["G2"] + d["G3"] - E_probe).max())
        return rep
    rep.formula_gap = float(np.abs(structural_E_additive(op_mp, cap) - E_probe).max())
    if max(eps) < 0.5:
        b = additive_bound(op_full, op_mp, cap)[0]
        rep.bound = b
        rep.bound_holds = bool(rep.E_norm <= b)
    return rep
