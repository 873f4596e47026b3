import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse

from mpschwarz.decomp import subdomain_blocks, two_domain_partition
from mpschwarz.fpsim import FormatOverflowError, RoundMode, get_format, round_scalar
from mpschwarz.pde import discretize
from mpschwarz.rounding import RoundingKind, apply_rounding, round_diag, round_mmatrix, round_plain
from mpschwarz.scaling import scale_general

BINARY_CHAIN = ["q52", "q43", "bfloat16", "fp16", "fp32", "fp64"]
DEC_CHAIN = [f"dec:{d}" for d in range(1, 17)]


def mmatrix_pattern(n, seed):
    rng = np.random.default_rng(seed)
    off = -rng.uniform(0.05, 1, (n, n)) * (rng.uniform(size=(n, n)) < 0.4)
    np.fill_diagonal(off, 0)
    return sparse.csr_matrix(off + np.diag(rng.uniform(0.05, 100, n)))


def dense(M):
    return M.toarray()


@pytest.mark.parametrize("routine", [round_mmatrix, round_diag, round_plain])
def test_representable_fixed_point(routine):
    X = sparse.csr_matrix(np.array([[1.0, -0.5, 0], [-0.25, 1, -0.5], [0, -0.5, 1]]))
    r = routine(X, "fp16")
    assert r.F.nnz == 0 or np.all(r.F.data == 0)
    assert (r.A_rounded != X).nnz == 0


def test_mmatrix_example_entry_oracle():
    fmt = get_format("fp16")
    delta = 1e-4  # below the fp16 spacing at 1
    X = sparse.csr_matrix(np.array([[1 + delta, -(1 + delta)], [0, 1]]))
    r = round_mmatrix(X, fmt)
    F = dense(r.F)
    assert F[0, 0] > 0 and F[0, 1] > 0 and F[1, 1] == 0
    R = dense(r.A_rounded)
    assert R[0, 0] == round_scalar(1 + delta, fmt, RoundMode.AWAY_FROM_ZERO) == 1 + 2 ** -10
    assert R[0, 1] == round_scalar(-(1 + delta), fmt, RoundMode.TOWARD_ZERO) == -1.0
    # zero entries are not materialized
    assert r.A_rounded.nnz == X.nnz == r.F.nnz


def test_mmatrix_problem1_subdomain_fp16():
    A = discretize(1, 20)
    part = two_domain_partition(20)
    for i in range(2):
        _, calA = scale_general(subdomain_blocks(A, part, i).A_i, "fp16")
        r = round_mmatrix(calA, "fp16")
        assert r.F.data.min() >= 0
        assert np.any(r.F.data > 0)
        # rounded entries equal the scalar oracle entry by entry
        C = calA.tocoo()
        R = r.A_rounded.tocoo()
        for v, rv in zip(C.data[:200], R.data[:200]):
            mode = RoundMode.AWAY_FROM_ZERO if v > 0 else RoundMode.TOWARD_ZERO
            assert rv == round_scalar(v, "fp16", mode)


def test_diag_examples():
    X = sparse.csr_matrix(np.array([[1.0, -0.5], [-0.5, 1.0]]))
    assert np.all(round_diag(X, "fp16").F.data == 0)
    Y = sparse.csr_matrix(np.array([[1.0, -1 / 3], [-1 / 3, 1.0]]))
    r = round_diag(Y, "dec:4")
    R = dense(r.A_rounded)
    assert R[0, 1] == -0.3333 and R[1, 0] == -0.3333 and R[0, 0] == 1.0
    assert abs(R[0, 1]) <= 1 / 3


def test_diag_nonrepresentable_warns():
    X = sparse.csr_matrix(np.array([[1 + 1e-6, -0.5], [-0.5, 1.0]]))
    with pytest.warns(RuntimeWarning):
        r = round_diag(X, "fp16")
    assert r.warnings and dense(r.A_rounded)[0, 0] == 1 + 1e-6


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 15), seed=st.integers(0, 2**31 - 1), name=st.sampled_from(BINARY_CHAIN + DEC_CHAIN))
def test_diag_symmetric_dominant(n, seed, name):
    rng = np.random.default_rng(seed)
    B = np.triu(-rng.uniform(0, 1, (n, n)), 1)
    B = B + B.T
    X = sparse.csr_matrix(B + np.eye(n))  # unit diagonal, |offdiag| <= 1
    r = round_diag(X, name)
    R = dense(r.A_rounded)
    assert np.array_equal(R, R.T)
    assert np.all(np.abs(R - np.diag(np.diag(R))) <= np.diag(R)[:, None])


def test_plain_mixed_signs():
    X = sparse.csr_matrix(np.random.default_rng(0).standard_normal((100, 100)))
    F = round_plain(X, "fp16").F.data
    assert F.min() < 0 < F.max()


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 12), seed=st.integers(0, 2**31 - 1), name=st.sampled_from(BINARY_CHAIN + DEC_CHAIN),
       kind=st.sampled_from(list(RoundingKind)))
def test_error_law_2u(n, seed, name, kind):
    rng = np.random.default_rng(seed)
    X = sparse.csr_matrix(rng.standard_normal((n, n)) + np.eye(n))
    fmt = get_format(name)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        r = apply_rounding(kind, X, fmt)
    keep = np.abs(X.data) >= fmt.x_min
    if kind is RoundingKind.DIAG_EXACT:
        rows = np.repeat(np.arange(n), np.diff(X.indptr))
        keep &= rows != X.indices
    assert np.all(np.abs(r.F.data[keep]) <= 2 * fmt.unit_roundoff * np.abs(X.data[keep]))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(2, 20), seed=st.integers(0, 2**31 - 1))
def test_mmatrix_monotone_in_precision(n, seed):
    X = mmatrix_pattern(n, seed)
    for chain in (BINARY_CHAIN, DEC_CHAIN):
        prev = None
        for name in chain:  # coarse to fine
            R = dense(round_mmatrix(X, name).A_rounded)
            if prev is not None:
                assert np.all(R <= prev)
            prev = R


def test_mmatrix_overflow_raises_or_saturates():
    X = sparse.csr_matrix(np.array([[241.0, -1.0], [-1.0, 2.0]]))
    with pytest.raises(FormatOverflowError):
        round_mmatrix(X, "q43")
    # 239 rounds up to the top value 240 without overflow
    assert dense(round_mmatrix(X * (239 / 241), "q43").A_rounded)[0, 0] == 240.0
    with pytest.warns(RuntimeWarning):
        r = round_mmatrix(X, "q43", on_overflow="saturate")
    assert r.stats.overflow == 1 and dense(r.A_rounded)[0, 0] == 240.0 and r.warnings
    # clamping is the one way F can go negative
    assert dense(r.F)[0, 0] == -1.0


def test_plain_overflow_raises():
    with pytest.raises(FormatOverflowError):
        round_plain(sparse.csr_matrix(np.array([[1e6]])), "fp16")


def test_apply_rounding_dispatch():
    X = sparse.csr_matrix(np.array([[1.1, -0.3], [-0.3, 1.1]]))
    assert apply_rounding("mmatrix", X, "dec:2").kind is RoundingKind.MMATRIX_UP
    assert apply_rounding("diag", X, "dec:2").kind is RoundingKind.DIAG_EXACT
    with pytest.raises(ValueError):
        apply_rounding("stochastic", X, "dec:2")
