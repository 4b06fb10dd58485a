import math

import numpy as np
import pytest
import sympy

from polyritz import _numeric as nm
from polyritz.errors import MassMatrixError, NotPositiveDefiniteError, ParameterError
from polyritz.linalg import cho_solve, cholesky, generalized_sym_eigen, qr, sym_eigen


def test_cholesky_examples():
    assert np.array_equal(cholesky(np.eye(3)), np.eye(3))
    L = cholesky(np.array([[4.0, 2.0], [2.0, 3.0]]))
    assert np.allclose(L, [[2, 0], [1, math.sqrt(2)]])
    with pytest.raises(NotPositiveDefiniteError) as info:
        cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))
    assert info.value.pivot == 2


def test_cholesky_rejects_nan():
    with pytest.raises(ParameterError):
        cholesky(np.array([[1.0, np.nan], [np.nan, 1.0]]))


def test_cho_solve_random():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((30, 30))
    a = x @ x.T + 30 * np.eye(30)
    b = rng.standard_normal(30)
    assert np.allclose(a @ cho_solve(cholesky(a), b), b)


def test_sym_eigen_examples():
    w, v = sym_eigen(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(w, [1, 2, 3])
    assert np.allclose(np.abs(v), np.eye(3)[:, [1, 2, 0]])
    w, _ = sym_eigen(np.array([[2.0, 1.0], [1.0, 2.0]]))
    assert np.allclose(w, [1, 3])


def test_sym_eigen_charpoly_oracle():
    rng = np.random.default_rng(11)
    a = rng.integers(-5, 6, (6, 6))
    a = a + a.T
    roots = sorted(float(sympy.re(r)) for r in sympy.Matrix(a.tolist()).charpoly().nroots(n=30))
    w, _ = sym_eigen(a.astype(float))
    assert np.allclose(w, roots, atol=1e-9)


@pytest.mark.parametrize("n", [5, 40, 128, 256])
def test_sym_eigen_residual(n):
    rng = np.random.default_rng(n)
    x = rng.standard_normal((n, n))
    a = (x + x.T) / 2
    w, v = sym_eigen(a)
    norm = np.abs(w).max()
    assert np.abs(a @ v - v * w).max() <= 1e-10 * norm * max(1, n / 64)
    assert np.abs(v.T @ v - np.eye(n)).max() < 1e-12 * n
    assert np.allclose(w, np.linalg.eigvalsh(a), atol=1e-11 * norm)


def test_sym_eigen_mp():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((12, 12))
    a = (x + x.T) / 2
    with nm.working_precision(50):
        am = nm.convert(a, 50)
        w, v = sym_eigen(am)
        res = am.dot(v) - v * w
        assert nm.abs_max(res) < 1e-45
    assert np.allclose(nm.to_float(w), np.linalg.eigvalsh(a), atol=1e-13)


def test_pencil_examples():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((4, 4))
    a = x + x.T
    res = generalized_sym_eigen(a, np.eye(4))
    assert np.allclose(res.values, np.linalg.eigvalsh(a))
    res = generalized_sym_eigen(np.diag([2.0, 8.0]), np.diag([1.0, 4.0]))
    assert np.allclose(res.values, [2, 2]) and res.effective_rank == 2
    res = generalized_sym_eigen(np.eye(2), np.diag([1.0, 0.0]), rank_tol=1e-10)
    assert res.effective_rank == 1 and np.allclose(res.values, [1])


def test_pencil_b_orthonormal():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((20, 20))
    b = x @ x.T + np.eye(20)
    y = rng.standard_normal((20, 20))
    a = y + y.T
    res = generalized_sym_eigen(a, b)
    v = res.vectors
    assert np.allclose(v.T @ b @ v, np.eye(20), atol=1e-9)
    assert np.allclose(a @ v, b @ v * res.values, atol=1e-8)


def test_pencil_rejects_indefinite_mass():
    with pytest.raises(MassMatrixError):
        generalized_sym_eigen(np.eye(2), np.diag([1.0, -1.0]))


@pytest.mark.parametrize("seed", range(5))
def test_pencil_congruence_invariance(seed):
    rng = np.random.default_rng(seed)
    n = 10
    x = rng.standard_normal((n, n))
    b = x @ x.T + n * np.eye(n)
    y = rng.standard_normal((n, n))
    a = y @ y.T
    c = np.eye(n) + 0.2 * rng.standard_normal((n, n))
    assert np.linalg.cond(c) < 20
    w1 = generalized_sym_eigen(a, b).values
    w2 = generalized_sym_eigen(c.T @ a @ c, c.T @ b @ c).values
    assert np.allclose(w1, w2, rtol=1e-9, atol=1e-12 * np.abs(w1).max())


def test_qr_mp_matches_float():
    rng = np.random.default_rng(2)
    a = rng.standard_normal((9, 5))
    with nm.working_precision(40):
        q, r = qr(nm.convert(a, 40))
        assert nm.abs_max(q.dot(r) - nm.convert(a, 40)) < 1e-35
        assert nm.abs_max(q.T.dot(q) - nm.eye(5, q)) < 1e-35
    qf, rf = np.linalg.qr(a)
    assert np.allclose(np.abs(nm.to_float(r)), np.abs(rf))
