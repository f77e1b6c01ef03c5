import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from netwave import linalg


def spd(n, seed=0, density=0.05):
    rng = np.random.default_rng(seed)
    A = sp.random(n, n, density=density, random_state=rng)
    return (A @ A.T + n * sp.identity(n)).tocsr()


def test_identity_solve():
    F = linalg.cholesky(sp.identity(4, format="csr"))
    b = np.array([1.0, -2.0, 3.0, 0.5])
    np.testing.assert_allclose(linalg.solve(F, b), b)


def test_hand_spd_against_dense_inverse():
    A = np.array([[4.0, 1.0, 0.0], [1.0, 3.0, -1.0], [0.0, -1.0, 2.0]])
    b = np.array([1.0, 2.0, 3.0])
    x = linalg.cholesky(A).solve(b)
    np.testing.assert_allclose(x, np.linalg.inv(A) @ b, rtol=1e-13)


@pytest.mark.parametrize("n", [50, 800])
def test_residual_contract(n):
    A = spd(n)
    b = np.random.default_rng(1).standard_normal(n)
    x = linalg.cholesky(A).solve(b)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_sparse_cholesky_detects_indefinite():
    A = spd(600).tolil()
    A[5, 5] = -1e6
    with pytest.raises(linalg.NotPositiveDefiniteError):
        linalg.cholesky(A.tocsr())


def test_dense_cholesky_detects_indefinite():
    with pytest.raises(linalg.NotPositiveDefiniteError):
        linalg.cholesky(np.diag([1.0, -1.0]))


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 100))
def test_solve_is_linear(alpha, beta, seed):
    A = spd(40, seed=seed)
    F = linalg.cholesky(A)
    rng = np.random.default_rng(seed)
    b1, b2 = rng.standard_normal((2, 40))
    lhs = F.solve(alpha * b1 + beta * b2)
    rhs = alpha * F.solve(b1) + beta * F.solve(b2)
    assert np.abs(lhs - rhs).max() <= 1e-12 * max(1.0, np.abs(rhs).max())


def test_cg_matches_direct():
    A = spd(300, seed=4)
    b = np.ones(300)
    res = linalg.cg(A, b, precond=lambda r: r / A.diagonal())
    assert res.residual <= 1e-10 and res.iterations > 0
    np.testing.assert_allclose(res.x, linalg.cholesky(A).solve(b), rtol=1e-8)


def test_cg_reports_nonconvergence():
    A = spd(300, seed=4)
    with pytest.raises(linalg.ConvergenceError) as err:
        linalg.cg(A, np.ones(300), maxit=2)
    assert err.value.iterations == 2 and err.value.residual > 0


def test_saddle_toy_by_hand():
    # minimize x^2 + y^2 subject to x - y = 0 with load (1, 3): x = y = 1
    A = sp.identity(2, format="csr") * 2.0
    C = sp.csr_matrix([[1.0, -1.0]])
    b = np.array([1.0, 3.0]) * 2.0 / 2.0
    for method in ("direct", "ldl", "cg"):
        x = linalg.solve_saddle(A, C, b, method=method)
        np.testing.assert_allclose(x, [1.0, 1.0], atol=1e-12)


def test_saddle_methods_agree():
    n, m = 700, 12
    A = spd(n, seed=2)
    rng = np.random.default_rng(3)
    C = sp.random(m, n, density=0.05, random_state=rng).tocsr() + sp.eye(m, n)
    B = rng.standard_normal((n, 3))
    X = {meth: linalg.solve_saddle(A, C, B, method=meth) for meth in ("direct", "ldl", "cg")}
    scale = np.abs(X["direct"]).max()
    assert np.abs(X["direct"] - X["ldl"]).max() <= 1e-8 * scale
    assert np.abs(X["direct"] - X["cg"]).max() <= 1e-8 * scale
    assert np.abs(C @ X["direct"]).max() <= 1e-12 * scale


def test_matrix_market_roundtrip(tmp_path):
    A = spd(30)
    linalg.write_matrix_market(tmp_path / "a.mtx", A)
    B = linalg.read_matrix_market(tmp_path / "a.mtx")
    assert abs(A - B).max() == 0


def test_repeated_factorizations_identical():
    A = spd(900, seed=7)
    b = np.arange(900, dtype=float)
    x1 = linalg.cholesky(A).solve(b)
    x2 = linalg.cholesky(A).solve(b)
    np.testing.assert_array_equal(x1, x2)
