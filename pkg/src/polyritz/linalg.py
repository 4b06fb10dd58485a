"""Dense real-symmetric linear algebra: Cholesky, Jacobi eigensolver, pencils.

All routines accept float64 arrays or numpy object arrays of ``gmpy2.mpfr``;
the latter must be called inside ``_numeric.working_precision``.  Tolerances are relative
to ``n * max|a_ij|``.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from . import _numeric as nm
from .errors import MassMatrixError, NotPositiveDefiniteError, NumericalError, ParameterError

JACOBI_TOL = 1e-14
MAX_SWEEPS = 100


class PencilResult(NamedTuple):
    values: np.ndarray
    vectors: np.ndarray
    effective_rank: int


def matrix_norm(a):
    return a.shape[0] * nm.abs_max(a)


def symmetrize(a):
    """Return ``((A + A^T) / 2, max|A - A^T|)``."""
    a = np.asarray(a)
    asym = nm.abs_max(a - a.T)
    return (a + a.T) / 2, asym


def _check_finite(a):
    if not np.all(np.isfinite(nm.to_float(a))):
        raise ParameterError("matrix has non-finite entries")


def cholesky(a):
    """Lower-triangular ``L`` with ``L L^T = A``.

    Raises NotPositiveDefiniteError carrying the 1-based pivot index at the
    first non-positive pivot.
    """
    a = np.asarray(a)
    _check_finite(a)
    n = a.shape[0]
    L = np.zeros_like(a)
    for j in range(n):
        row = L[j, :j]
        pivot = a[j, j] - row.dot(row)
        if not pivot > 0:
            raise NotPositiveDefiniteError(j + 1, float(pivot))
        ljj = nm.sqrt(pivot)
        L[j, j] = ljj
        if j + 1 < n:
            L[j + 1:, j] = (a[j + 1:, j] - L[j + 1:, :j].dot(row)) / ljj
    return L


def solve_lower(L, b):
    """Forward substitution for ``L x = b`` (b may be a matrix)."""
    b = np.array(b, dtype=L.dtype, copy=True)
    for i in range(L.shape[0]):
        b[i] = (b[i] - L[i, :i].dot(b[:i])) / L[i, i]
    return b


def solve_upper_t(L, b):
    """Back substitution for ``L^T x = b``."""
    b = np.array(b, dtype=L.dtype, copy=True)
    n = L.shape[0]
    for i in range(n - 1, -1, -1):
        b[i] = (b[i] - L[i + 1:, i].dot(b[i + 1:])) / L[i, i]
    return b


def cho_solve(L, b):
    return solve_upper_t(L, solve_lower(L, b))


def qr(a):
    """Thin QR factorisation ``A = Q R`` of a tall matrix (Householder for mpfr)."""
    a = np.asarray(a)
    _check_finite(a)
    if not nm.is_mp(a):
        return np.linalg.qr(a)
    m, n = a.shape
    r = np.array(a, copy=True)
    vs = []
    for j in range(n):
        x = r[j:, j].copy()
        alpha = nm.sqrt(x.dot(x))
        if x[0] > 0:
            alpha = -alpha
        v = x
        v[0] = v[0] - alpha
        vv = v.dot(v)
        if vv != 0:
            r[j:, j:] = r[j:, j:] - np.outer(v, (2 / vv) * v.dot(r[j:, j:]))
        vs.append((v, vv))
    q = nm.zeros((m, n), a)
    for i in range(n):
        q[i, i] = nm.like(1, a)
    for j in range(n - 1, -1, -1):
        v, vv = vs[j]
        if vv != 0:
            q[j:, :] = q[j:, :] - np.outer(v, (2 / vv) * v.dot(q[j:, :]))
    r = np.triu(r[:n, :])
    return q, r


def _round_robin(n):
    """Rounds of disjoint index pairs covering all pairs once (circle method)."""
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        pairs = [(players[i], players[m - 1 - i]) for i in range(m // 2)]
        pairs = [(min(p, q), max(p, q)) for p, q in pairs if p < n and q < n]
        if pairs:
            p, q = zip(*pairs)
            rounds.append((np.array(p), np.array(q)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def _off_norm_exact(a):
    off = a - np.diag(np.diag(a))
    return abs(float(nm.sqrt(np.sum(off * off)))) if nm.is_mp(a) else float(np.linalg.norm(off))


def _jacobi(a, v, tol):
    n = a.shape[0]
    scale = matrix_norm(a)
    if n < 2 or scale == 0:
        return a, v
    target = tol * scale
    skip = 1e-3 * target / n
    rounds = _round_robin(n)
    mp = nm.is_mp(a)
    one = nm.like(1, a)
    for _ in range(MAX_SWEEPS):
        if _off_norm_exact(a) <= target:
            return a, v
        for P, Q in rounds:
            apq = a[P, Q]
            active = np.abs(nm.to_float(apq) if mp else apq) > skip
            if not active.any():
                continue
            P, Q, apq = P[active], Q[active], apq[active]
            theta = (a[Q, Q] - a[P, P]) / (2 * apq)
            with np.errstate(over="ignore"):
                t = one / (np.abs(theta) + nm.sqrt(theta * theta + one))
            neg = (nm.to_float(theta) if mp else theta) < 0
            t[neg] = -t[neg]
            c = one / nm.sqrt(t * t + one)
            s = t * c
            cc, ss = c[:, None], s[:, None]
            ap, aq = a[P, :], a[Q, :]
            a[P, :], a[Q, :] = cc * ap - ss * aq, ss * ap + cc * aq
            ap, aq = a[:, P], a[:, Q]
            a[:, P], a[:, Q] = ap * c - aq * s, ap * s + aq * c
            a[P, Q] = 0
            a[Q, P] = 0
            vp, vq = v[:, P], v[:, Q]
            v[:, P], v[:, Q] = vp * c - vq * s, vp * s + vq * c
    raise NumericalError("Jacobi iteration did not converge")


def orthonormalize(q):
    """Classical Gram-Schmidt applied twice, column by column."""
    q = np.array(q, copy=True)
    for j in range(q.shape[1]):
        col = q[:, j]
        for _ in range(2):
            if j:
                col = col - q[:, :j].dot(q[:, :j].T.dot(col))
        q[:, j] = col / nm.sqrt(col.dot(col))
    return q


def sym_eigen(a, tol=None):
    """Eigenvalues (ascending) and orthonormal eigenvectors by cyclic Jacobi.

    Object-array input is warm-started: a float64 Jacobi solve supplies an
    approximate eigenbasis, re-orthonormalised at working precision, and the
    extended-precision sweeps then only polish a nearly diagonal matrix.
    """
    a = np.asarray(a)
    _check_finite(a)
    a, _ = symmetrize(a)
    n = a.shape[0]
    mp = nm.is_mp(a)
    if tol is None:
        tol = max(JACOBI_TOL, 100 * nm.unit_roundoff(a)) if not mp else 100 * nm.unit_roundoff(a)
    if mp and n > 4:
        _, v0 = sym_eigen(nm.to_float(a))
        v0 = orthonormalize(nm.convert(v0, dps=nm.current_dps()))
        work, _ = symmetrize(v0.T.dot(a).dot(v0))
        d, v = _jacobi(work, np.array(v0, copy=True), tol)
    else:
        d, v = _jacobi(a.copy(), nm.eye(n, a), tol)
    w = np.diag(d).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def generalized_sym_eigen(a, b, rank_tol=1e-12):
    """Solve ``A v = lambda B v`` on the numerical range of PSD ``B``.

    ``B`` is diagonalised, directions with eigenvalue ``<= rank_tol * max``
    are dropped, and the projected standard problem is solved.  Returns the
    eigenvalues ascending, B-orthonormal vectors and the retained dimension.
    """
    a, _ = symmetrize(np.asarray(a))
    b, _ = symmetrize(np.asarray(b))
    mu, vb = sym_eigen(b)
    mu_f = nm.to_float(mu)
    if mu_f.size and mu_f[0] < -rank_tol * matrix_norm(b):
        raise MassMatrixError(f"mass matrix not PSD (eigenvalue {mu_f[0]:.3e})")
    keep = mu_f > rank_tol * (mu_f.max() if mu_f.size else 0.0)
    w = vb[:, keep] / nm.sqrt(mu[keep])[None, :]
    projected, _ = symmetrize(w.T.dot(a).dot(w))
    theta, y = sym_eigen(projected)
    return PencilResult(theta, w.dot(y), int(keep.sum()))
