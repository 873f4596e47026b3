import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse

from mpschwarz.fpsim import get_format, round_matrix
from mpschwarz.linalg import (
    CapExceededError,
    SingularMatrixError,
    as_csr,
    is_m_matrix,
    lu_factor,
    norms,
    read_matrix_market,
    solve,
    spectral_radius_dense,
    write_matrix_market,
)


def tridiag(n, a=-1.0, b=2.0, c=-1.0):
    return sparse.diags([a * np.ones(n - 1), b * np.ones(n), c * np.ones(n - 1)], [-1, 0, 1], format="csr")


def tridiag_inverse(n):
    """Closed form of the inverse of tridiag(-1, 2, -1): i (n+1-j) / (n+1) for i <= j (1-based)."""
    i = np.arange(1, n + 1)
    lo, hi = np.minimum.outer(i, i), np.maximum.outer(i, i)
    return lo * (n + 1 - hi) / (n + 1)


# --- lu_factor / solve ---------------------------------------------------------

def test_identity_solve():
    b = np.arange(1.0, 6.0)
    assert np.array_equal(solve(lu_factor(sparse.eye(5)), b), b)


def test_tridiag_first_column():
    x = solve(lu_factor(tridiag(4)), np.eye(4)[:, 0])
    assert np.allclose(x, [0.8, 0.6, 0.4, 0.2], rtol=0, atol=1e-15)
    assert np.allclose(x, tridiag_inverse(4)[:, 0])


def test_duplicate_rows_singular():
    M = np.array([[1.0, 2.0, 0.0], [1.0, 2.0, 0.0], [0.0, 1.0, 3.0]])
    with pytest.raises(SingularMatrixError):
        lu_factor(M)
    with pytest.raises(SingularMatrixError):
        lu_factor(M, "fp16")


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        solve(lu_factor(np.eye(3)), np.ones(4))


def test_block_rhs():
    f = lu_factor(tridiag(6))
    X = solve(f, np.eye(6))
    assert np.allclose(X, tridiag_inverse(6), atol=1e-14)


def test_as_csr_canonical():
    A = sparse.coo_matrix(([1.0, 2.0, 3.0], ([0, 0, 1], [1, 1, 0])), shape=(2, 2))
    C = as_csr(A)
    assert C[0, 1] == 3.0 and C.has_sorted_indices
    with pytest.raises(ValueError):
        as_csr(np.ones((2, 3)))
    with pytest.raises(ValueError):
        as_csr(np.array([[np.nan]]))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 40), seed=st.integers(0, 2**31 - 1))
def test_solve_residual_property(n, seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n)) + n * np.eye(n)
    b = rng.standard_normal(n)
    x = solve(lu_factor(M), b)
    kappa1 = np.linalg.cond(M, 1)
    assert np.linalg.norm(M @ x - b, 1) <= 1e-12 * kappa1 * np.linalg.norm(b, 1)


def test_simulated_lu_fp64_tag_and_low_precision():
    A = tridiag(8)
    assert not lu_factor(A).simulated
    f16 = lu_factor(A, "fp16")
    assert f16.simulated and f16.fmt.name == "fp16"
    b = np.ones(8)
    x = solve(f16, b)
    # every stored value lives in fp16
    assert np.array_equal(round_matrix(x[None, :], "fp16")[0][0], x)
    ref = solve(lu_factor(A), b)
    assert np.linalg.norm(x - ref) / np.linalg.norm(ref) < 50 * get_format("fp16").unit_roundoff


def test_simulated_lu_pivoting_matches_dense():
    rng = np.random.default_rng(4)
    A = sparse.random(30, 30, density=0.2, random_state=5) + sparse.diags(rng.uniform(0.1, 1, 30))
    A = as_csr(A)
    b = rng.standard_normal(30)
    x = solve(lu_factor(A, "dec:16"), b)
    ref = np.linalg.solve(A.toarray(), b)
    assert np.allclose(x, ref, rtol=1e-8, atol=1e-8 * np.abs(ref).max())


# --- is_m_matrix -----------------------------------------------------------------

def test_m_matrix_examples():
    for mode in ("sufficient", "exact"):
        assert is_m_matrix(np.eye(3), mode)
        assert is_m_matrix(np.array([[2.0, -1], [-1, 2]]), mode)
        assert not is_m_matrix(np.array([[1.0, 2], [0, 1]]), mode)
    rep = is_m_matrix(np.array([[2.0, -1], [-1, 2]]), "exact")
    # inverse (1/3)[[2,1],[1,2]] has smallest entry 1/3
    assert rep.min_inverse_entry == pytest.approx(1 / 3)


def test_weakly_dominant_irreducible_accepted():
    # interior rows of tridiag(-1,2,-1) are only weakly dominant
    rep = is_m_matrix(tridiag(10))
    assert rep and rep.irreducible
    # weak dominance without irreducibility earns no certificate
    rep = is_m_matrix(np.array([[1.0, -1, 0], [0, 1, 0], [0, 0, 1]]))
    assert not rep and rep.irreducible is False


def test_exact_cap():
    with pytest.raises(CapExceededError):
        is_m_matrix(tridiag(20), "exact", cap=10)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 25), seed=st.integers(0, 2**31 - 1))
def test_exact_agrees_when_sufficient(n, seed):
    rng = np.random.default_rng(seed)
    off = -rng.uniform(0, 1, (n, n)) * (rng.uniform(size=(n, n)) < 0.3)
    np.fill_diagonal(off, 0)
    A = off + np.diag(-off.sum(axis=1) + rng.uniform(0.01, 1, n))
    if is_m_matrix(A, "sufficient"):
        assert is_m_matrix(A, "exact")


# --- spectral radius ----------------------------------------------------------------

def test_spectral_radius_examples():
    assert spectral_radius_dense(np.diag([0.5, -0.25])) == pytest.approx(0.5)
    assert spectral_radius_dense(np.array([[0.0, 1], [0, 0]])) == 0.0
    n = 9
    T = np.eye(n) - tridiag(n).toarray() / 2  # Jacobi iteration matrix
    assert spectral_radius_dense(T) == pytest.approx(np.cos(np.pi / (n + 1)), rel=1e-12)
    assert np.cos(np.pi / 10) == pytest.approx(0.95106, abs=1e-5)
    with pytest.raises(CapExceededError):
        spectral_radius_dense(np.eye(5), cap=4)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(2, 30), seed=st.integers(0, 2**31 - 1), scale=st.floats(0.3, 1.7))
def test_spectral_radius_vs_powers(n, seed, scale):
    rng = np.random.default_rng(seed)
    T = rng.standard_normal((n, n))
    T *= scale / np.max(np.abs(np.linalg.eigvals(T)))
    rho = spectral_radius_dense(T)
    if abs(rho - 1) < 0.1:
        return
    v = rng.standard_normal(n)
    growth = np.linalg.norm(np.linalg.matrix_power(T, 400) @ v) / np.linalg.norm(v)
    assert (growth < 1) == (rho < 1)


# --- norms ----------------------------------------------------------------------------

def test_norms_identity_and_diagonal():
    m = norms(np.eye(5))
    assert (m.two_norm_est, m.one_norm, m.inf_norm) == (pytest.approx(1), 1, 1)
    assert m.frobenius == pytest.approx(np.sqrt(5))
    m = norms(sparse.csr_matrix(np.diag([3.0, -4.0])))
    assert m.two_norm_est == pytest.approx(4, rel=1e-6)
    assert (m.one_norm, m.inf_norm, m.frobenius) == (4, 4, 5)


def test_two_norm_vs_svd():
    M = np.random.default_rng(11).standard_normal((50, 50))
    m = norms(M)
    assert m.two_norm_converged
    assert m.two_norm_est == pytest.approx(np.linalg.svd(M, compute_uv=False)[0], rel=1e-5)


def test_two_norm_nonconvergence_flagged():
    M = np.random.default_rng(2).standard_normal((40, 40))
    m = norms(M, maxiter=2)
    assert not m.two_norm_converged and m.two_norm_est > 0


# --- Matrix Market -------------------------------------------------------------------

def test_matrix_market_round_trip(tmp_path):
    A = tridiag(7) * 0.3
    p = tmp_path / "a.mtx"
    write_matrix_market(p, A, comment="test")
    text = p.read_text().splitlines()
    assert text[0].startswith("%%MatrixMarket matrix coordinate real")
    B = read_matrix_market(p)
    assert (B != A).nnz == 0
    # 1-based indices in the file body
    body = [l for l in text if not l.startswith("%")]
    assert body[1].split()[:2] == ["1", "1"]
