import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from genalpha.linalg import (FactorizationError, KroneckerOperator, block_eigs, pcg, power_iteration_genmax)


def spd_banded(m, bw, rng):
    a = rng.standard_normal((m, m))
    a = np.triu(np.tril(a, bw), -bw)
    a = a @ a.T + m * np.eye(m)
    return np.triu(np.tril(a, bw), -bw) + m * np.eye(m)


@settings(max_examples=25, deadline=None)
@given(shape=st.lists(st.integers(1, 6), min_size=1, max_size=3), seed=st.integers(0, 10_000))
def test_kronecker_matches_dense(shape, seed):
    rng = np.random.default_rng(seed)
    factors = [spd_banded(m, 2, rng) for m in shape]
    op = KroneckerOperator(factors)
    dense = np.ones((1, 1))
    for f in factors:
        dense = np.kron(f, dense)
    v = rng.standard_normal(op.size)
    np.testing.assert_allclose(op.apply(v), dense @ v, rtol=1e-12, atol=1e-10)
    np.testing.assert_allclose(op.solve(v), np.linalg.solve(dense, v), rtol=1e-9, atol=1e-12)
    np.testing.assert_allclose(op.diagonal(), np.diag(dense))


def test_kronecker_rejects_indefinite_factor():
    with pytest.raises(FactorizationError):
        KroneckerOperator([np.array([[1.0, 2.0], [2.0, 1.0]])])


def test_kronecker_flop_counter():
    op = KroneckerOperator([sp.diags([1.0, 4.0, 1.0], [-1, 0, 1], shape=(10, 10)).toarray()] * 2)
    op.solve(np.ones(100))
    op.solve(np.ones(100))
    assert op.flops == 2 * op.solve_flops() > 0


def laplacian(n):
    return sp.diags([-1.0, 2.0, -1.0], [-1, 0, 1], shape=(n, n)).tocsr()


def test_pcg_solves_and_estimates_condition_number():
    A = laplacian(60)
    b = np.random.default_rng(2).standard_normal(60)
    x, rep = pcg(A, None, b, tol=1e-12)
    assert rep.converged
    assert np.linalg.norm(A @ x - b) <= 1e-12 * np.linalg.norm(b) * 1.01
    ev = np.linalg.eigvalsh(A.toarray())
    assert rep.kappa == pytest.approx(ev.max() / ev.min(), rel=1e-6)


def test_pcg_error_decreases_in_energy_norm():
    rng = np.random.default_rng(3)
    A = laplacian(40) + sp.eye(40) * 0.1
    d = 1.0 / A.diagonal()
    b = rng.standard_normal(40)
    x_star = np.linalg.solve(A.toarray(), b)
    errs = []
    pcg(A, lambda r: d * r, b, tol=1e-14,
        callback=lambda x: errs.append(float((x - x_star) @ (A @ (x - x_star)))))
    assert all(e2 <= e1 * (1 + 1e-12) for e1, e2 in zip(errs, errs[1:]))


def test_pcg_exact_preconditioner_one_iteration():
    A = laplacian(30)
    inv = np.linalg.inv(A.toarray())
    _, rep = pcg(A, lambda r: inv @ r, np.ones(30))
    assert rep.iterations == 1


def test_pcg_zero_rhs():
    x, rep = pcg(laplacian(5), None, np.zeros(5))
    assert rep.iterations == 0 and np.all(x == 0)


def test_pcg_reports_breakdown_on_indefinite_matrix():
    A = sp.diags([1.0, -1.0, 2.0]).tocsr()
    _, rep = pcg(A, None, np.array([1.0, 1.0, 1.0]))
    assert rep.breakdown or not rep.converged


def test_power_iteration_matches_dense_generalized_eigenvalue():
    n = 40
    K = laplacian(n) * n
    M = sp.diags([1.0, 4.0, 1.0], [-1, 0, 1], shape=(n, n)).tocsr() / (6 * n)
    lu = sp.linalg.splu(M.tocsc())
    rep = power_iteration_genmax(lambda v: K @ v, lu.solve, n, tol=1e-12, max_iter=20000)
    ref = sla.eigh(K.toarray(), M.toarray(), eigvals_only=True).max()
    assert rep.value == pytest.approx(ref, rel=1e-3)
    # Rayleigh quotients increase monotonically toward the maximum
    h = np.array(rep.history)
    assert np.all(np.diff(h) >= -1e-9 * h[1:])


def test_block_eigs_match_numpy():
    rng = np.random.default_rng(4)
    for _ in range(20):
        b = rng.standard_normal((3, 3))
        ours = np.sort_complex(block_eigs(b))
        ref = np.sort_complex(np.linalg.eigvals(b))
        np.testing.assert_allclose(ours, ref, atol=1e-8)
