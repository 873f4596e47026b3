"""Working-precision sparse/dense linear algebra.

Sparse matrices are :class:`scipy.sparse.csr_matrix` instances in canonical
form (sorted indices, no duplicates). Factorizations come in two flavours:
SuperLU in working precision, or a banded LU with partial pivoting in which
every flop is rounded to a simulated :class:`~mpschwarz.fpsim.FloatFormat`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy import io as spio
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse import linalg as spla

from .fpsim import PRESETS, FloatFormat, RoundMode, get_format, round_array

__all__ = [
    "DENSE_CAP",
    "SIMULATED_LU_CAP",
    "SingularMatrixError",
    "CapExceededError",
    "as_csr",
    "LUFactors",
    "lu_factor",
    "solve",
    "MMatrixReport",
    "is_m_matrix",
    "spectral_radius_dense",
    "MatrixNorms",
    "norms",
    "read_matrix_market",
    "write_matrix_market",
]

#: Largest dimension for which dense fallbacks (inverses, eigensolves) run.
DENSE_CAP = 3000
#: Largest dimension for the dense-storage simulated LU.
SIMULATED_LU_CAP = 4000


class SingularMatrixError(np.linalg.LinAlgError):
    pass


class CapExceededError(RuntimeError):
    """A dense computation was requested above the configured size cap."""


def as_csr(M, square=True):
    """Return ``M`` as a canonical float64 CSR matrix."""
    A = sparse.csr_matrix(M, dtype=np.float64, copy=True)
    A.sum_duplicates()
    A.sort_indices()
    if square and A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A.data)):
        raise ValueError("matrix has non-finite entries")
    return A


def _check_cap(n, cap, what):
    if cap is not None and n > cap:
        raise CapExceededError(f"{what}: n={n} exceeds dense cap {cap}")


def _bandwidths(A):
    A = sparse.coo_matrix(A)
    if A.nnz == 0:
        return 0, 0
    d = A.row - A.col
    return int(max(d.max(), 0)), int(max(-d.min(), 0))


@dataclass(frozen=True)
class LUFactors:
    """Factors of a square matrix with their precision tag.

    ``fmt`` is the format in which the factor entries were produced (fp64 for
    SuperLU factors). ``splu`` holds the SuperLU object in working precision;
    otherwise ``lu``/``piv`` hold an in-place factorization of the row-permuted
    matrix; ``lower[k]`` is the last nonzero row of column ``k`` of L and
    ``upper`` the upper bandwidth of U (pivoting fill included).
    """

    n: int
    fmt: FloatFormat
    splu: object = None
    lu: np.ndarray | None = None
    piv: np.ndarray | None = None
    lower: np.ndarray | None = None
    upper: int = 0

    @property
    def simulated(self) -> bool:
        return self.splu is None


def lu_factor(M, fmt=None) -> LUFactors:
    """LU factorization with partial pivoting.

    Parameters
    ----------
    M : sparse or dense square matrix
    fmt : FloatFormat or str, optional
        If given and not working precision, every operation of the
        factorization is rounded (nearest) to ``fmt``; the entries of ``M``
        are expected to be representable already.

    Raises
    ------
    SingularMatrixError
        A pivot is exactly zero.
    """
    A = as_csr(M)
    n = A.shape[0]
    fmt = PRESETS["fp64"] if fmt is None else get_format(fmt)
    if fmt.is_working_precision:
        try:
            lu = spla.splu(A.tocsc(), permc_spec="COLAMD", diag_pivot_thresh=1.0)
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from None
        return LUFactors(n, fmt, splu=lu)
    return _simulated_lu(A, fmt)


def _rnd(x, fmt):
    return round_array(x, fmt, RoundMode.NEAREST, on_overflow="inf")[0]


def _simulated_lu(A, fmt):
    n = A.shape[0]
    _check_cap(n, SIMULATED_LU_CAP, "simulated LU")
    bl, bu = _bandwidths(A)
    ub = bl + bu
    a = A.toarray()
    piv = np.arange(n)
    for k in range(n):
        r1 = min(n, k + bl + 1)
        c1 = min(n, k + ub + 1)
        col = np.abs(a[k:r1, k])
        p = k + int(np.argmax(col))
        if a[p, k] == 0.0:
            raise SingularMatrixError(f"zero pivot in column {k}")
        if p != k:
            a[[k, p], k:c1] = a[[p, k], k:c1]
            a[[k, p], :k] = a[[p, k], :k]
            piv[[k, p]] = piv[[p, k]]
        if r1 > k + 1:
            l = _rnd(a[k + 1:r1, k] / a[k, k], fmt)
            a[k + 1:r1, k] = l
            if c1 > k + 1:
                prod = _rnd(np.outer(l, a[k, k + 1:c1]), fmt)
                a[k + 1:r1, k + 1:c1] = _rnd(a[k + 1:r1, k + 1:c1] - prod, fmt)
    if not np.all(np.isfinite(a)):
        raise FloatingPointError(f"overflow in simulated LU ({fmt.name})")
    # row swaps can carry multipliers below the original band
    low = np.tril(a, -1) != 0
    last = np.where(low.any(axis=0), n - 1 - np.argmax(low[::-1], axis=0), np.arange(n))
    return LUFactors(n, fmt, lu=a, piv=piv, lower=last, upper=ub)


def _simulated_solve(f, b):
    fmt = f.fmt
    a = f.lu
    n = f.n
    y = _rnd(b[f.piv], fmt)
    for k in range(n - 1):
        r1 = int(f.lower[k]) + 1
        if r1 > k + 1:
            y[k + 1:r1] = _rnd(y[k + 1:r1] - _rnd(np.multiply.outer(a[k + 1:r1, k], y[k]), fmt), fmt)
    for k in range(n - 1, -1, -1):
        y[k] = _rnd(y[k] / a[k, k], fmt)
        r0 = max(0, k - f.upper)
        if k > r0:
            y[r0:k] = _rnd(y[r0:k] - _rnd(np.multiply.outer(a[r0:k, k], y[k]), fmt), fmt)
    return y


def solve(f: LUFactors, b):
    """Solve ``M x = b`` with factors from :func:`lu_factor`.

    ``b`` may be a vector or an ``(n, k)`` block of right-hand sides.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != f.n:
        raise ValueError(f"dimension mismatch: factors are {f.n}, rhs is {b.shape[0]}")
    if f.splu is not None:
        return f.splu.solve(b)
    return _simulated_solve(f, b.copy())


@dataclass
class MMatrixReport:
    is_m_matrix: bool
    mode: str
    sign_pattern: bool
    positive_diagonal: bool
    diagonally_dominant: bool | None = None
    irreducible: bool | None = None
    min_inverse_entry: float | None = None
    reason: str = ""

    def __bool__(self):
        return self.is_m_matrix


def is_m_matrix(M, check_mode="sufficient", cap=DENSE_CAP, tol=1e-12) -> MMatrixReport:
    """Classify ``M`` as a (nonsingular) M-matrix.

    ``"sufficient"`` checks the sign pattern, a positive diagonal and row
    diagonal dominance that is either strict, or weak with at least one
    strict row and an irreducible matrix. ``"exact"`` additionally forms the
    dense inverse (``n <= cap``) and checks it is entrywise nonnegative up to
    ``-tol * max|M^{-1}|``.
    """
    if check_mode not in ("sufficient", "exact"):
        raise ValueError(f"unknown check_mode {check_mode!r}")
    A = as_csr(M)
    n = A.shape[0]
    d = A.diagonal()
    off = A - sparse.diags(d)
    sign_ok = bool(off.nnz == 0 or off.data.max() <= 0.0)
    pos_diag = bool(np.all(d > 0))
    rep = MMatrixReport(False, check_mode, sign_ok, pos_diag)
    if not sign_ok:
        rep.reason = "positive off-diagonal entry"
    elif not pos_diag:
        rep.reason = "nonpositive diagonal entry"
    if not (sign_ok and pos_diag):
        if check_mode == "exact":
            _check_cap(n, cap, "is_m_matrix(exact)")
        return rep

    offsum = np.asarray(abs(off).sum(axis=1)).ravel()
    slack = d - offsum
    scale = 1e-13 * d
    strict = slack > scale
    weak = slack >= -scale
    if np.all(strict):
        dominant = True
    elif np.all(weak) and np.any(strict):
        ncomp, _ = csgraph.connected_components(off != 0, directed=True, connection="strong")
        rep.irreducible = bool(ncomp == 1)
        dominant = rep.irreducible
    else:
        dominant = False
    rep.diagonally_dominant = dominant

    if check_mode == "sufficient":
        rep.is_m_matrix = dominant
        if not dominant:
            rep.reason = "no diagonal dominance certificate"
        return rep

    _check_cap(n, cap, "is_m_matrix(exact)")
    try:
        Minv = np.linalg.inv(A.toarray())
    except np.linalg.LinAlgError:
        rep.reason = "singular"
        return rep
    mn = float(Minv.min())
    rep.min_inverse_entry = mn
    rep.is_m_matrix = bool(mn >= -tol * np.abs(Minv).max())
    if not rep.is_m_matrix:
        rep.reason = "inverse has negative entries"
    return rep


def spectral_radius_dense(M, cap=DENSE_CAP) -> float:
    """Largest eigenvalue modulus via a dense eigensolve."""
    T = M.toarray() if sparse.issparse(M) else np.asarray(M, dtype=np.float64)
    _check_cap(T.shape[0], cap, "spectral_radius_dense")
    if T.size == 0:
        return 0.0
    return float(np.max(np.abs(sla.eigvals(T))))


@dataclass
class MatrixNorms:
    two_norm_est: float
    one_norm: float
    inf_norm: float
    frobenius: float
    two_norm_converged: bool = True


def norms(M, rtol=1e-6, maxiter=1000, seed=0) -> MatrixNorms:
    """Exact 1, inf and Frobenius norms and a power-iteration 2-norm estimate."""
    if sparse.issparse(M):
        A = as_csr(M, square=False)
        absA = abs(A)
        one = float(absA.sum(axis=0).max()) if A.nnz else 0.0
        inf = float(absA.sum(axis=1).max()) if A.nnz else 0.0
        fro = float(np.sqrt((A.data ** 2).sum()))
        matvec, rmatvec = A.dot, A.T.dot
        ncol = A.shape[1]
    else:
        A = np.atleast_2d(np.asarray(M, dtype=np.float64))
        one = float(np.abs(A).sum(axis=0).max())
        inf = float(np.abs(A).sum(axis=1).max())
        fro = float(np.linalg.norm(A, "fro"))
        matvec, rmatvec = A.dot, A.T.dot
        ncol = A.shape[1]
    if fro == 0.0:
        return MatrixNorms(0.0, one, inf, fro, True)
    x = np.random.default_rng(seed).standard_normal(ncol)
    x /= np.linalg.norm(x)
    sigma = 0.0
    converged = False
    for _ in range(maxiter):
        y = rmatvec(matvec(x))
        lam = np.linalg.norm(y)
        if lam == 0.0:
            break
        new = float(np.sqrt(lam))
        x = y / lam
        if abs(new - sigma) <= rtol * new:
            sigma = new
            converged = True
            break
        sigma = new
    return MatrixNorms(sigma, one, inf, fro, converged)


def read_matrix_market(path):
    """Read a Matrix Market coordinate file into canonical CSR."""
    return as_csr(spio.mmread(str(path)), square=False)


def write_matrix_market(path, M, comment=""):
    """Write ``M`` in Matrix Market coordinate format (1-based indices)."""
    spio.mmwrite(str(path), sparse.coo_matrix(M), comment=comment, field="real")
