"""Verifiers for the sufficient convergence conditions of rounded subdomains.

Every check returns a :class:`Check` whose ``status`` is ``"passed"``,
``"failed"`` or ``"skipped"`` (with the reason), so a report never silently
omits a verdict. Dense checks are gated by a size cap.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy import sparse
from scipy.sparse import linalg as spla

from .linalg import DENSE_CAP, as_csr, lu_factor, solve
from .rounding import RoundedSubdomain

__all__ = [
    "Check",
    "SubdomainConditions",
    "ConditionReport",
    "check_norm_condition",
    "check_entrywise_condition",
    "check_nonneg_inverse",
    "check_weak_regular",
    "check_spd_conditions",
    "check_damping",
    "check_subdomain",
    "check_operator",
]

TAU_NEG = 1e-12
WEYL_RTOL = 1e-9
_BATCH = 256


@dataclass
class Check:
    status: str
    value: float | None = None
    detail: dict = field(default_factory=dict)

    @property
    def passed(self):
        return self.status == "passed"

    @property
    def skipped(self):
        return self.status == "skipped"

    @classmethod
    def verdict(cls, ok, value=None, **detail):
        return cls("passed" if ok else "failed", None if value is None else float(value), detail)

    @classmethod
    def skip(cls, reason):
        return cls("skipped", None, {"reason": reason})


def _skip_cap(n, cap):
    return Check.skip(f"cap exceeded: n={n} > {cap}")


def _dense(M):
    return M.toarray() if sparse.issparse(M) else np.asarray(M, dtype=np.float64)


def _inv_times_F(sub: RoundedSubdomain):
    """``calA⁻¹ F`` restricted to the nonzero columns of ``F``."""
    F = sparse.csc_matrix(sub.F)
    F.eliminate_zeros()
    cols = np.flatnonzero(np.diff(F.indptr))
    fac = lu_factor(sub.A_scaled)
    return fac, F, cols


def check_norm_condition(sub: RoundedSubdomain, norm="auto", cap=DENSE_CAP) -> Check:
    """``||calA⁻¹ F|| < 1``.

    ``norm`` is ``"two"``, ``"one"``, ``"fro"`` or ``"auto"`` (2-norm up to
    ``cap``, 1-norm above). At dense-cap sizes all three norms are recorded
    in ``detail``; above the cap the 1- and Frobenius norms are formed from
    batched solves against the nonzero columns of ``F``.
    """
    n = sub.n
    fac, F, cols = _inv_times_F(sub)
    if norm == "auto":
        norm = "two" if n <= cap else "one"
    if norm not in ("two", "one", "fro"):
        raise ValueError(f"unknown norm {norm!r}")
    if cols.size == 0:
        return Check.verdict(True, 0.0, norm_used=norm, two=0.0, one=0.0, fro=0.0)
    if n <= cap:
        X = solve(fac, F[:, cols].toarray())
        vals = {"two": float(np.linalg.norm(X, 2)), "one": float(np.abs(X).sum(axis=0).max()),
                "fro": float(np.linalg.norm(X, "fro"))}
    else:
        if norm == "two":
            return _skip_cap(n, cap)
        one, fro2 = 0.0, 0.0
        for s in range(0, cols.size, _BATCH):
            X = solve(fac, F[:, cols[s:s + _BATCH]].toarray())
            one = max(one, float(np.abs(X).sum(axis=0).max()))
            fro2 += float((X ** 2).sum())
        vals = {"two": None, "one": one, "fro": float(np.sqrt(fro2))}
    v = vals[norm]
    return Check.verdict(v < 1.0, v, norm_used=norm, **vals)


def check_entrywise_condition(sub: RoundedSubdomain, cap=DENSE_CAP, tol=TAU_NEG) -> Check:
    """``calA⁻¹ >= calA⁻¹ F calA⁻¹`` entrywise, up to ``-tol * max|calA⁻¹|``.

    ``value`` is the largest violation (0 when none).
    """
    n = sub.n
    if n > cap:
        return _skip_cap(n, cap)
    Ainv = np.linalg.inv(_dense(sub.A_scaled))
    rhs = Ainv @ (sub.F @ Ainv)
    diff = Ainv - rhs
    scale = np.abs(Ainv).max()
    mn = float(diff.min())
    return Check.verdict(mn >= -tol * scale, max(0.0, -mn), min_difference=mn, scale=float(scale))


def check_nonneg_inverse(sub: RoundedSubdomain, cap=DENSE_CAP, tol=TAU_NEG) -> Check:
    """``calA⁻¹ >= 0`` entrywise."""
    n = sub.n
    if n > cap:
        return _skip_cap(n, cap)
    Ainv = np.linalg.inv(_dense(sub.A_scaled))
    mn = float(Ainv.min())
    return Check.verdict(mn >= -tol * np.abs(Ainv).max(), mn)


def check_weak_regular(sub: RoundedSubdomain, cap=DENSE_CAP, tol=TAU_NEG) -> Check:
    """``calÃ⁻¹ >= 0`` and ``calÃ⁻¹ F >= 0`` entrywise (weak regular splitting)."""
    n = sub.n
    if n > cap:
        return _skip_cap(n, cap)
    try:
        Rinv = np.linalg.inv(_dense(sub.A_rounded))
    except np.linalg.LinAlgError:
        return Check("failed", None, {"reason": "rounded matrix is singular"})
    RF = sub.F.T.dot(Rinv.T).T if sparse.issparse(sub.F) else Rinv @ sub.F
    m1, m2 = float(Rinv.min()), float(RF.min())
    ok1 = m1 >= -tol * np.abs(Rinv).max()
    ok2 = m2 >= -tol * max(np.abs(RF).max(), np.finfo(float).tiny)
    return Check.verdict(ok1 and ok2, min(m1, m2), inverse_min=m1, inverse_times_F_min=m2)


def _is_symmetric(M):
    M = as_csr(M)
    return abs(M - M.T).max() <= 1e-14 * max(abs(M).max(), np.finfo(float).tiny)


def _extreme_eig(M, cap, which):
    """Smallest eigenvalue of a symmetric matrix; dense below ``cap``."""
    n = M.shape[0]
    if n <= cap:
        return float(sla.eigvalsh(_dense(M), subset_by_index=[0, 0])[0])
    M = sparse.csc_matrix(M)
    if which == "pd":
        # shift-invert around zero finds the smallest eigenvalue of an SPD matrix
        return float(spla.eigsh(M, k=1, sigma=0.0, which="LM", tol=1e-8,
                                return_eigenvectors=False)[0])
    return float(spla.eigsh(M, k=1, which="SA", tol=1e-8, return_eigenvectors=False)[0])


def check_spd_conditions(sub: RoundedSubdomain, cap=DENSE_CAP) -> dict:
    """Eigenvalue conditions for symmetric ``calA`` and ``F``.

    Returns a dict of :class:`Check` with keys ``pd`` (``calÃ`` positive
    definite), ``eig`` (``λ_min(calÃ) >= |λ_min(F)|``), ``eig_sufficient``
    (``λ_min(calA) >= 2 |λ_min(F)|``) and ``weyl`` (the cross-check
    ``λ_min(calÃ) >= λ_min(calA) + λ_min(F)`` at relative tolerance 1e-9).
    """
    if not (_is_symmetric(sub.A_scaled) and _is_symmetric(sub.F)):
        raise ValueError("SPD conditions need symmetric calA and F")
    lam_A = _extreme_eig(sub.A_scaled, cap, "pd")
    lam_R = _extreme_eig(sub.A_rounded, cap, "pd")
    F = as_csr(sub.F)
    lam_F = _extreme_eig(F, cap, "any") if F.nnz else 0.0
    scale = max(abs(lam_A), abs(lam_R), abs(lam_F), np.finfo(float).tiny)
    lams = dict(lambda_min_A=lam_A, lambda_min_A_rounded=lam_R, lambda_neg_inf_F=lam_F)
    return {
        "pd": Check.verdict(lam_R > 0, lam_R, **lams),
        "eig": Check.verdict(lam_R > 0 and lam_R >= abs(lam_F), lam_R - abs(lam_F), **lams),
        "eig_sufficient": Check.verdict(lam_A >= 2 * abs(lam_F), lam_A - 2 * abs(lam_F), **lams),
        "weyl": Check.verdict(lam_R >= lam_A + lam_F - WEYL_RTOL * scale,
                              lam_R - (lam_A + lam_F), **lams),
    }


def check_damping(op) -> Check:
    """``theta < 1/q`` for the (damped) additive method.

    The restricted and multiplicative methods need no damping, so the check
    passes for them with ``required=False``.
    """
    variant = op.cfg.variant.value
    q = op.part.q
    if variant not in ("AS", "dAS"):
        return Check.verdict(True, None, required=False, q=q)
    theta = op.cfg.theta
    return Check.verdict(theta < 1.0 / q, theta, required=True, q=q, limit=1.0 / q)


@dataclass
class SubdomainConditions:
    index: int
    norm_condition: Check
    entrywise_condition: Check
    nonneg_inverse: Check
    weak_regular: Check
    spd: dict | None = None
    norm_used: str = "two"

    def to_dict(self):
        d = {k: asdict(v) for k, v in self.__dict__.items() if isinstance(v, Check)}
        d["index"] = self.index
        d["norm_used"] = self.norm_used
        d["spd"] = None if self.spd is None else {k: asdict(v) for k, v in self.spd.items()}
        return d


@dataclass
class ConditionReport:
    fmt: str
    rounding: str
    subdomains: list
    damping: Check | None = None

    def certified(self, kind="mmatrix") -> bool:
        """Whether every subdomain meets the conditions for ``kind``.

        ``"mmatrix"``: norm and entrywise conditions. ``"spd"``: norm,
        entrywise and the sufficient eigenvalue condition. ``"norm"``: the
        norm condition alone.
        """
        ok = all(s.norm_condition.passed for s in self.subdomains)
        if kind == "norm":
            return ok
        ok = ok and all(s.entrywise_condition.passed for s in self.subdomains)
        if kind == "spd":
            ok = ok and all(s.spd is not None and s.spd["eig_sufficient"].passed for s in self.subdomains)
        return ok

    def hypotheses_met(self, kind="mmatrix") -> bool:
        """``certified(kind)`` plus the damping hypothesis of the method."""
        return self.certified(kind) and self.damping is not None and self.damping.passed

    def to_dict(self):
        return {"fmt": self.fmt, "rounding": self.rounding,
                "certified_mmatrix": self.certified("mmatrix"),
                "damping": None if self.damping is None else asdict(self.damping),
                "subdomains": [s.to_dict() for s in self.subdomains]}

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def check_subdomain(sub: RoundedSubdomain, index=0, cap=DENSE_CAP, norm="auto", spd=None) -> SubdomainConditions:
    """Run every applicable check on one rounded subdomain.

    ``spd=None`` runs the eigenvalue checks when ``calA`` and ``F`` are
    symmetric.
    """
    nc = check_norm_condition(sub, norm, cap)
    if spd is None:
        spd = _is_symmetric(sub.A_scaled) and _is_symmetric(sub.F)
    spd_res = check_spd_conditions(sub, cap) if spd else None
    return SubdomainConditions(index, nc, check_entrywise_condition(sub, cap),
                               check_nonneg_inverse(sub, cap), check_weak_regular(sub, cap),
                               spd_res, nc.detail.get("norm_used", "two"))


def check_operator(op, cap=DENSE_CAP, norm="auto") -> ConditionReport:
    """Condition report for every subdomain of a built Schwarz operator."""
    subs = [check_subdomain(s.rounded, i, cap, norm) for i, s in enumerate(op.subs)]
    return ConditionReport(op.cfg.solve_fmt.name, op.cfg.rounding.value, subs, check_damping(op))
