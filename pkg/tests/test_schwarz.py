import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse

from _oracles import exact_iteration_matrix, operator_iteration_matrix, realized_subdomain_matrix
from mpschwarz.decomp import Partition, two_domain_partition
from mpschwarz.linalg import CapExceededError, lu_factor, solve, spectral_radius_dense
from mpschwarz.pde import discretize, make_rhs_and_init
from mpschwarz.rounding import RoundedSubdomain, RoundingKind, round_plain
from mpschwarz.schwarz import (
    SchwarzConfig,
    SolveMode,
    SubdomainBuildError,
    Variant,
    apply_preconditioner,
    assemble_dense_iteration_matrix,
    assemble_dense_preconditioned,
    build_operator,
    estimate_rho_conv,
    iterate,
    subdomain_solve,
    sweep,
)

VARIANTS = ["AS", "dAS", "RAS", "MS"]


def small(pid=1, n=8):
    return discretize(pid, n), two_domain_partition(n)


def op_for(A, part, variant, fmt="fp64", rounding="mmatrix", **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return build_operator(A, part, SchwarzConfig(variant, None, fmt, rounding, **kw))


def random_mmatrix(n, seed):
    rng = np.random.default_rng(seed)
    off = -rng.uniform(0.1, 3, (n, n)) * (rng.uniform(size=(n, n)) < 0.4)
    np.fill_diagonal(off, 0)
    return sparse.csr_matrix(off + np.diag(-off.sum(axis=1) + rng.uniform(0.1, 2, n)))


# --- config ---------------------------------------------------------------------

def test_config_defaults():
    assert SchwarzConfig("dAS").theta == 0.49
    assert SchwarzConfig("RAS").theta == 1.0
    cfg = SchwarzConfig("MS", None, "fp16", "diag")
    assert cfg.symmetric_scaling and cfg.solve_mode is SolveMode.ROUNDED_EXACT
    assert cfg.to_dict()["solve_fmt"] == "fp16"
    with pytest.raises(ValueError):
        SchwarzConfig("MS", theta=1.5)
    with pytest.raises(ValueError):
        SchwarzConfig("XS")


def test_theta_warning():
    A, part = small()
    with pytest.warns(RuntimeWarning, match="theta"):
        build_operator(A, part, SchwarzConfig("dAS", 0.6))


# --- fp64 reduces to the classical methods ---------------------------------------

@pytest.mark.parametrize("variant", VARIANTS)
def test_fp64_plain_equals_full_precision(variant):
    A, part = small(2, 8)
    op = op_for(A, part, variant, "fp64", "nearest", scaling_on=False)
    for s in op.subs:
        assert (s.rounded.A_rounded != s.A_i).nnz == 0
    T = assemble_dense_iteration_matrix(op)
    theta = 0.49 if variant == "dAS" else 1.0
    assert np.abs(T - exact_iteration_matrix(A, part, variant, theta)).max() < 1e-12


@pytest.mark.parametrize("variant", VARIANTS)
def test_fp64_scaled_equals_full_precision(variant):
    A, part = small(1, 8)
    op = op_for(A, part, variant, "fp64", "mmatrix")
    T = assemble_dense_iteration_matrix(op)
    theta = 0.49 if variant == "dAS" else 1.0
    assert np.abs(T - exact_iteration_matrix(A, part, variant, theta)).max() < 1e-12


# --- subdomain solves ---------------------------------------------------------------

def test_subdomain_solve_fp64_direct():
    A, part = small(3, 10)
    op = op_for(A, part, "MS", "fp64")
    g = np.random.default_rng(0).uniform(size=part.W[0].size)
    ref = solve(lu_factor(op.subs[0].A_i), g)
    x = subdomain_solve(op, 0, g)
    assert np.linalg.norm(x - ref) / np.linalg.norm(ref) < 1e-12


@pytest.mark.parametrize("fmt", ["fp16", "q43", "dec:2"])
def test_subdomain_solve_identity(fmt):
    part = Partition(5, (np.arange(5),), (np.arange(5),), 1)
    g = np.array([1.0, -2.0, 0.5, 4.0, 0.25])
    # unscaled: the identity is representable, so the solve returns g exactly
    op = op_for(sparse.eye(5), part, "AS", fmt, "nearest", scaling_on=False)
    assert np.array_equal(subdomain_solve(op, 0, g), g)
    # scaled: mu I is rounded, so the realized operator is a multiple of I
    op = op_for(sparse.eye(5), part, "AS", fmt)
    At = realized_subdomain_matrix(op.subs[0])
    assert np.allclose(At, At[0, 0] * np.eye(5), rtol=0, atol=0)
    assert np.allclose(subdomain_solve(op, 0, g), g / At[0, 0], rtol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_subdomain_solve_dec5_dense_inverse_oracle(seed):
    A = random_mmatrix(10, seed)
    part = Partition(10, (np.arange(10),), (np.arange(10),), 1)
    op = op_for(A, part, "AS", "dec:5")
    At = realized_subdomain_matrix(op.subs[0])
    g = np.random.default_rng(seed).uniform(size=10)
    ref = np.linalg.inv(At) @ g
    assert np.linalg.norm(subdomain_solve(op, 0, g) - ref) <= 1e-10 * np.linalg.norm(ref)


def test_subdomain_zero_rhs():
    A, part = small()
    op = op_for(A, part, "MS", "fp16")
    assert np.array_equal(subdomain_solve(op, 1, np.zeros(part.W[1].size)), np.zeros(part.W[1].size))
    with pytest.raises(ValueError):
        subdomain_solve(op, 1, np.zeros(3))


# --- sweeps against dense oracles ------------------------------------------------------

@pytest.mark.parametrize("variant", VARIANTS)
@pytest.mark.parametrize("fmt", ["q43", "fp16", "dec:3"])
@pytest.mark.parametrize("pid", [1, 5])
def test_sweep_matches_dense_iteration_matrix(variant, fmt, pid):
    A, part = discretize(pid, 10), two_domain_partition(10)
    rounding = "diag" if pid == 5 else "mmatrix"
    op = op_for(A, part, variant, fmt, rounding)
    T_ref = operator_iteration_matrix(op)
    u = np.random.default_rng(1).standard_normal(op.N)
    out = sweep(op, u, np.zeros_like(u))
    assert np.linalg.norm(out - T_ref @ u) <= 1e-12 * np.linalg.norm(u) * max(1, np.abs(T_ref).max())
    T = assemble_dense_iteration_matrix(op)
    assert np.abs(T - T_ref).max() <= 1e-12 * max(1, np.abs(T_ref).max())


@pytest.mark.parametrize("variant", VARIANTS)
def test_preconditioner_dense_and_linear(variant):
    A, part = small(3, 10)
    op = op_for(A, part, variant, "dec:2")
    rng = np.random.default_rng(2)
    v, w = rng.standard_normal(op.N), rng.standard_normal(op.N)
    MinvA = assemble_dense_preconditioned(op)
    Minv = MinvA @ np.linalg.inv(A.toarray())
    assert np.linalg.norm(apply_preconditioner(op, v) - Minv @ v) <= 1e-10 * np.linalg.norm(Minv @ v)
    a, b = 0.7, -2.5
    lhs = apply_preconditioner(op, a * v + b * w)
    rhs = a * apply_preconditioner(op, v) + b * apply_preconditioner(op, w)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(rhs)
    # I - T = M⁻¹A
    assert np.abs(assemble_dense_iteration_matrix(op) + MinvA - np.eye(op.N)).max() < 1e-12


def test_preconditioner_decoupled_blocks():
    B1, B2 = random_mmatrix(4, 1).toarray(), random_mmatrix(5, 2).toarray()
    A = sparse.csr_matrix(np.block([[B1, np.zeros((4, 5))], [np.zeros((5, 4)), B2]]))
    part = Partition(9, (np.arange(4), np.arange(4, 9)), (np.arange(4), np.arange(4, 9)), 1)
    op = op_for(A, part, "AS", "fp64", "nearest", scaling_on=False)
    v = np.arange(1.0, 10.0)
    ref = np.concatenate([np.linalg.solve(B1, v[:4]), np.linalg.solve(B2, v[4:])])
    assert np.allclose(apply_preconditioner(op, v), ref, rtol=1e-13)


@settings(max_examples=25, deadline=None)
@given(variant=st.sampled_from(VARIANTS),
       fmt=st.sampled_from(["q52", "q43", "bfloat16", "fp16", "dec:1", "dec:4"]),
       pid=st.integers(1, 6), seed=st.integers(0, 10_000))
def test_fixed_point_property(variant, fmt, pid, seed):
    A, part = discretize(pid, 6), two_domain_partition(6)
    rounding = "diag" if pid >= 4 else "mmatrix"
    op = op_for(A, part, variant, fmt, rounding)
    u = np.random.default_rng(seed).uniform(size=op.N)
    f = A @ u
    out = sweep(op, u, f)
    assert np.linalg.norm(out - u) <= 1e-12 * np.linalg.norm(u)


def test_block_sweep_equals_columnwise():
    A, part = small(2, 8)
    op = op_for(A, part, "RAS", "fp16")
    U = np.random.default_rng(3).standard_normal((op.N, 3))
    F = np.random.default_rng(4).standard_normal((op.N, 3))
    block = sweep(op, U, F)
    for k in range(3):
        assert np.allclose(block[:, k], sweep(op, U[:, k], F[:, k]), rtol=1e-14, atol=1e-14)
    with pytest.raises(ValueError):
        sweep(op, U, F[:, :2])


def test_sweep_deterministic():
    A, part = small(1, 10)
    op = op_for(A, part, "AS", "bfloat16")
    u = np.random.default_rng(5).standard_normal(op.N)
    f = np.ones(op.N)
    assert np.array_equal(sweep(op, u, f), sweep(op, u, f))


def test_dense_cap():
    A, part = small()
    op = op_for(A, part, "MS", "fp64")
    with pytest.raises(CapExceededError):
        assemble_dense_iteration_matrix(op, cap=10)


# --- scalar rounding damping ------------------------------------------------------------

def scalar_case(alpha, n=6):
    """alpha times the integer 5-point Laplacian; fp16 nearest rounding, no scaling."""
    T = sparse.diags([-np.ones(n - 1), 4 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1])
    S = sparse.diags([np.ones(n - 1), np.ones(n - 1)], [-1, 1])
    L = sparse.kron(sparse.eye(n), T) - sparse.kron(S, sparse.eye(n))
    return sparse.csr_matrix(alpha * L), two_domain_partition(n)


@pytest.mark.parametrize("variant", ["AS", "dAS", "RAS"])
def test_scalar_rounding_damping_identity(variant):
    from mpschwarz.fpsim import RoundMode, round_scalar

    alpha = 1.0 + 6e-4  # fp16 nearest rounds up to 1 + 2**-10, and 4 alpha to 4 + 2**-8
    alpha_t = round_scalar(alpha, "fp16", RoundMode.NEAREST)
    assert alpha_t > alpha
    tau = (alpha_t - alpha) / alpha
    A, part = scalar_case(alpha)
    mp = op_for(A, part, variant, "fp16", "nearest", scaling_on=False)
    full = op_for(A, part, variant, "fp64", "nearest", scaling_on=False)
    # every rounded entry is alpha_t times an integer
    for s in mp.subs:
        assert np.allclose(s.rounded.A_rounded.data / alpha_t, np.round(s.rounded.A_rounded.data / alpha_t))
    rng = np.random.default_rng(0)
    u, f = rng.standard_normal(mp.N), rng.standard_normal(mp.N)
    full_step = sweep(full, u, f) - u
    damped = u + full_step / (1 + tau)
    assert np.linalg.norm(sweep(mp, u, f) - damped) <= 1e-12 * np.linalg.norm(u)


# --- iterate ---------------------------------------------------------------------------------

def test_iterate_fp64_problem1_2500():
    A, part = discretize(1, 50), two_domain_partition(50)
    op = op_for(A, part, "MS", "fp64")
    f, u0 = make_rhs_and_init(op.N, 0)
    u_true = solve(lu_factor(A), f)
    tr = iterate(op, u0, f, u_true)
    assert tr.converged and not tr.diverged and 0 < tr.rho_conv < 1
    assert tr.err_2norm[-1] <= 1e-12 * tr.err_2norm[0]


def test_iterate_zero_iterations_at_solution():
    A, part = small()
    op = op_for(A, part, "MS", "fp16")
    f, _ = make_rhs_and_init(op.N, 1)
    u_true = solve(lu_factor(A), f)
    tr = iterate(op, u_true, f, u_true)
    assert tr.iterations == 0 and tr.converged


def test_iterate_residual_monitor_and_snapshots(tmp_path):
    A, part = small(4, 8)
    op = op_for(A, part, "RAS", "fp16", "diag")
    f, u0 = make_rhs_and_init(op.N, 2)
    tr = iterate(op, u0, f, keep=(1, 2))
    assert tr.converged and np.all(np.isnan(tr.err_2norm))
    assert tr.res_2norm[-1] <= 1e-12 * tr.res_2norm[0]
    assert tr.snapshots == {}  # no reference solution, nothing to snapshot
    u_true = solve(lu_factor(A), f)
    tr = iterate(op, u0, f, u_true, keep=(1, 2))
    assert sorted(tr.snapshots) == [1, 2]
    p = tmp_path / "t.csv"
    tr.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "iter,err_2norm,res_2norm" and len(lines) == tr.iterations + 2
    assert set(tr.summary()) >= {"rho_conv", "iterations", "converged"}


def test_divergence_flag():
    A, part = small(1, 8)

    def shrink(calA, fmt):
        # factor 0.2 makes every correction overshoot
        R = calA * 0.2
        return RoundedSubdomain(calA, R, R - calA, RoundingKind.PLAIN_NEAREST, fmt)

    op = build_operator(A, part, SchwarzConfig("AS", None, "fp64", "nearest"), rounder=shrink)
    f, u0 = make_rhs_and_init(op.N, 0)
    tr = iterate(op, u0, f, solve(lu_factor(A), f))
    assert tr.diverged and not tr.converged


def test_build_error_reports_subdomain():
    A, part = small()

    def singular(calA, fmt):
        R = calA.copy()
        R.data[:] = 0.0
        R[0, 0] = 1.0
        return RoundedSubdomain(calA, R, R - calA, RoundingKind.PLAIN_NEAREST, fmt)

    with pytest.raises(SubdomainBuildError) as ei:
        build_operator(A, part, SchwarzConfig("MS", None, "fp16"), rounder=singular)
    assert [i for i, _ in ei.value.failures] == [0, 1]


@pytest.mark.parametrize("variant", ["MS", "RAS", "dAS"])
def test_rho_conv_matches_dense_radius(variant):
    A, part = discretize(1, 20), two_domain_partition(20)
    op = op_for(A, part, variant, "fp16", max_iters=2000)
    f, u0 = make_rhs_and_init(op.N, 0)
    tr = iterate(op, u0, f, solve(lu_factor(A), f))
    rho = spectral_radius_dense(assemble_dense_iteration_matrix(op))
    assert abs(tr.rho_conv - rho) <= 0.02


def test_estimate_rho_conv():
    r = 0.8 ** np.arange(120)
    assert estimate_rho_conv(r) == pytest.approx(0.8, rel=1e-12)
    # floor cut: a plateau after the decay does not leak into the estimate
    plateau = np.concatenate([0.5 ** np.arange(60), np.full(60, 0.5 ** 59)])
    assert estimate_rho_conv(plateau) == pytest.approx(0.5, rel=1e-12)
    short = 0.3 ** np.arange(5)
    assert estimate_rho_conv(short) == pytest.approx(0.3, rel=1e-12)


# --- simulated mode -------------------------------------------------------------------------

@pytest.mark.parametrize("variant", VARIANTS)
def test_simulated_mode_close_to_rounded_exact(variant):
    A, part = small(1, 8)
    ex = op_for(A, part, variant, "fp16")
    sim = op_for(A, part, variant, "fp16", solve_mode="simulated")
    assert sim.subs[0].factors.simulated and sim.subs[0].factors.fmt.name == "fp16"
    assert not ex.subs[0].factors.simulated
    v = np.random.default_rng(0).uniform(size=ex.N)
    a, b = apply_preconditioner(ex, v), apply_preconditioner(sim, v)
    assert np.linalg.norm(a - b) / np.linalg.norm(a) < 0.05
    f, u0 = make_rhs_and_init(ex.N, 0)
    u_true = solve(lu_factor(A), f)
    assert np.linalg.norm(sweep(sim, u_true, A @ u_true) - u_true) == 0.0


# --- scaling similarity ---------------------------------------------------------------------

@pytest.mark.parametrize("variant", VARIANTS)
def test_scaling_similarity_fp64(variant):
    A, part = discretize(2, 12), two_domain_partition(12)
    on = op_for(A, part, variant, "fp64")
    off = op_for(A, part, variant, "fp64", scaling_on=False)
    r_on = spectral_radius_dense(assemble_dense_iteration_matrix(on))
    r_off = spectral_radius_dense(assemble_dense_iteration_matrix(off))
    assert abs(r_on - r_off) <= 1e-10


@pytest.mark.parametrize("variant", VARIANTS)
def test_diagonal_similarity_of_scaled_problem(variant):
    # iteration matrices for A and D1 A D2 are similar when solves are exact
    A, part = discretize(1, 10), two_domain_partition(10)
    rng = np.random.default_rng(7)
    D1, D2 = sparse.diags(rng.uniform(0.1, 10, 100)), sparse.diags(rng.uniform(0.1, 10, 100))
    B = sparse.csr_matrix(D1 @ A @ D2)
    ra = spectral_radius_dense(assemble_dense_iteration_matrix(op_for(A, part, variant, "fp64")))
    rb = spectral_radius_dense(assemble_dense_iteration_matrix(op_for(B, part, variant, "fp64")))
    assert abs(ra - rb) <= 1e-10
