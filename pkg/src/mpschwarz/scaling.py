"""Two-sided diagonal rescaling of subdomain matrices into a format's range.

A subdomain problem ``A_i u_i = f_i`` is rewritten as ``calA v = b_hat`` with
``calA = mu * D_r @ A_i @ D_c`` so that the entries of ``calA`` sit just
below ``x_max`` of the target format, and the right-hand side is rescaled so
its largest entry equals ``nu_hat * mu``. The solution is recovered in
working precision from ``v``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .fpsim import FloatFormat, get_format
from .linalg import as_csr

__all__ = [
    "ScalingData",
    "identity_scaling",
    "target_mu",
    "scale_general",
    "scale_symmetric",
    "scale_rhs",
    "unscale_solution",
]

DEFAULT_NU = 0.1
DEFAULT_NU_HAT = 0.1


@dataclass(frozen=True, eq=False)
class ScalingData:
    """Diagonal scalings and range factors of one subdomain.

    Attributes
    ----------
    D_r, D_c : ndarray
        Positive row and column scaling diagonals.
    mu : float
        Range factor applied to the scaled matrix.
    nu, nu_hat : float
        Fractions of the range used for the matrix and the right-hand side.
    symmetric : bool
        ``True`` when ``D_r`` and ``D_c`` are the same diagonal.
    """

    D_r: np.ndarray
    D_c: np.ndarray
    mu: float = 1.0
    nu: float = DEFAULT_NU
    nu_hat: float = DEFAULT_NU_HAT
    symmetric: bool = False

    def __post_init__(self):
        for d in (self.D_r, self.D_c):
            if not np.all(np.isfinite(d)) or np.any(d <= 0):
                raise ValueError("scaling diagonals must be finite and positive")
        if self.D_r.shape != self.D_c.shape:
            raise ValueError("row and column scalings differ in length")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not 0 < self.nu_hat <= 1:
            raise ValueError("nu_hat must lie in (0, 1]")
        if self.symmetric and not np.array_equal(self.D_r, self.D_c):
            raise ValueError("symmetric scaling requires D_r == D_c")

    @property
    def n(self):
        return self.D_r.size

    def kappa_c(self) -> float:
        """2-norm condition number of ``D_c``."""
        return float(self.D_c.max() / self.D_c.min())

    def apply(self, A):
        """Return ``mu * D_r @ A @ D_c`` as CSR."""
        A = as_csr(A)
        return as_csr(self.mu * (sparse.diags(self.D_r) @ A @ sparse.diags(self.D_c)))

    def unapply(self, calA):
        """Map a scaled matrix back: ``mu^-1 D_r^-1 calA D_c^-1``."""
        A = as_csr(calA)
        return as_csr(sparse.diags(1.0 / self.D_r) @ A @ sparse.diags(1.0 / self.D_c) / self.mu)

    def to_dict(self) -> dict:
        return {
            "D_r": self.D_r.tolist(),
            "D_c": self.D_c.tolist(),
            "mu": self.mu,
            "nu": self.nu,
            "nu_hat": self.nu_hat,
            "symmetric": self.symmetric,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["D_r"], dtype=float), np.asarray(d["D_c"], dtype=float),
                   float(d["mu"]), float(d["nu"]), float(d["nu_hat"]), bool(d["symmetric"]))

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


def identity_scaling(n, nu_hat=DEFAULT_NU_HAT) -> ScalingData:
    """No rescaling: unit diagonals and ``mu = 1``."""
    one = np.ones(n)
    return ScalingData(one, one.copy(), 1.0, DEFAULT_NU, nu_hat, False)


def target_mu(fmt, nu=DEFAULT_NU) -> float:
    """Range factor ``nu * x_max`` for reduced binary formats, 1 otherwise.

    Decimal formats have no range limit and working precision needs no range
    targeting, so both use ``mu = 1``.
    """
    fmt = get_format(fmt)
    if not 0 < nu < 1:
        raise ValueError("nu must lie in (0, 1)")
    if fmt.is_binary and not fmt.is_working_precision:
        return nu * fmt.x_max
    return 1.0


def _abs_max(A, axis):
    A = abs(A)
    return np.asarray(A.max(axis=axis).todense()).ravel()


def scale_general(A_i, fmt, nu=DEFAULT_NU, nu_hat=DEFAULT_NU_HAT):
    """Row-then-column max-norm equilibration.

    ``D_r`` holds the reciprocal row maxima of ``A_i`` and ``D_c`` the
    reciprocal column maxima of ``D_r @ A_i``, so every entry of
    ``D_r @ A_i @ D_c`` has magnitude at most one and every column attains it.

    Returns
    -------
    sd : ScalingData
    calA : csr_matrix
        ``mu * D_r @ A_i @ D_c``.
    """
    A = as_csr(A_i)
    r = _abs_max(A, 1)
    if np.any(r == 0):
        raise ValueError(f"zero row(s) in subdomain matrix: {np.flatnonzero(r == 0)[:5].tolist()}")
    D_r = 1.0 / r
    B = sparse.diags(D_r) @ A
    c = _abs_max(B, 0)
    if np.any(c == 0):
        raise ValueError(f"zero column(s) in subdomain matrix: {np.flatnonzero(c == 0)[:5].tolist()}")
    D_c = 1.0 / c
    sd = ScalingData(D_r, D_c, target_mu(fmt, nu), nu, nu_hat, False)
    return sd, sd.apply(A)


def _symmetric_mu(fmt, nu):
    # a power of two keeps mu * 1 exactly representable for any binary format
    mu = target_mu(fmt, nu)
    if mu == 1.0:
        return mu
    return 2.0 ** math.floor(math.log2(mu))


def scale_symmetric(A_i, fmt, nu=DEFAULT_NU, nu_hat=DEFAULT_NU_HAT, max_sweeps=100):
    """Symmetry-preserving equilibration ``D A D``.

    Repeats ``D <- D * rowmax(D A D)^(-1/2)`` until every row maximum lies in
    ``[1/2, 1]``. A matrix whose diagonal dominates its rows is finished after
    one sweep with ``D = diag(a_ii)^(-1/2)``; its scaled diagonal is then set
    to exactly ``mu``.

    Raises
    ------
    ValueError
        Non-symmetric input, a zero row, or a nonpositive diagonal when the
        diagonal dominates.
    """
    A = as_csr(A_i)
    if abs(A - A.T).max() != 0:
        raise ValueError("scale_symmetric requires a symmetric matrix")
    n = A.shape[0]
    diag = A.diagonal()
    absA = abs(A)
    dominant = bool(np.all(diag > 0) and np.all(_abs_max(absA, 1) <= diag))
    d = np.ones(n)
    for _ in range(max_sweeps):
        B = sparse.diags(d) @ absA @ sparse.diags(d)
        r = _abs_max(B, 1)
        if np.any(r == 0):
            raise ValueError("zero row in subdomain matrix")
        if np.all((r >= 0.5) & (r <= 1.0)):
            break
        d = d / np.sqrt(r)
    mu = _symmetric_mu(fmt, nu)
    sd = ScalingData(d, d.copy(), mu, nu, nu_hat, True)
    # a_ij * (d_i * d_j) is symmetric bit-for-bit
    C = sparse.coo_matrix(A)
    vals = C.data * (d[C.row] * d[C.col]) * mu
    if dominant:
        on_diag = C.row == C.col
        vals[on_diag] = mu
    calA = as_csr(sparse.csr_matrix((vals, (C.row, C.col)), shape=A.shape))
    return sd, calA


def scale_rhs(f_i, sd: ScalingData):
    """Rescale a right-hand side (vector or ``(n, k)`` block).

    Returns ``b_hat = nu_hat * mu / ||D_r f||_inf * D_r f`` and the norms
    ``||D_r f||_inf`` needed by :func:`unscale_solution`. Zero columns map to
    zero with norm 0.
    """
    f = np.asarray(f_i, dtype=np.float64)
    b = sd.D_r[:, None] * f if f.ndim == 2 else sd.D_r * f
    nb = np.abs(b).max(axis=0) if b.size else np.zeros(b.shape[1:])
    safe = np.where(nb > 0, nb, 1.0)
    b_hat = b * (sd.nu_hat * sd.mu / safe)
    return b_hat, nb


def unscale_solution(v_hat, sd: ScalingData, b_norm):
    """Recover ``u = ||b||_inf / nu_hat * D_c v_hat`` in working precision."""
    v = np.asarray(v_hat, dtype=np.float64)
    coef = np.asarray(b_norm, dtype=np.float64) / sd.nu_hat
    if v.ndim == 2:
        return sd.D_c[:, None] * v * coef
    return sd.D_c * v * coef
