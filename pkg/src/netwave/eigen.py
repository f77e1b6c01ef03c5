"""Eigenvalue utilities for the pencils ``K w = lambda M w`` and ``(K, L)``."""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from netwave import linalg
from netwave._rng import stream

DEFAULT_TOL = 1e-10
MAX_ITER = 10_000


@dataclass(frozen=True, eq=False)
class EigenResult:
    eigenvalues: np.ndarray   # ascending
    eigenvectors: np.ndarray  # columns, M-orthonormal
    residuals: np.ndarray     # |K w - lambda M w| / |K w|
    iterations: int

    def __len__(self):
        return len(self.eigenvalues)


def _as_operator(A):
    return A if sp.issparse(A) else np.asarray(A, dtype=float)


def _rayleigh_ritz(K, M, Y):
    A = Y.T @ (K @ Y)
    B = Y.T @ (M @ Y)
    theta, V = sla.eigh(0.5 * (A + A.T), 0.5 * (B + B.T))
    return theta, Y @ V


def _m_orthogonalize(M, X, against):
    if against.shape[1]:
        X = X - against @ (against.T @ (M @ X))
    return X


def smallest_eigenpairs(K, M, count, tol=DEFAULT_TOL, maxit=MAX_ITER, seed=0, block=None):
    """The ``count`` smallest eigenpairs of ``K w = lambda M w``.

    Block inverse iteration with Rayleigh-Ritz; leading vectors are locked
    once their relative residual drops below ``tol`` and the active block is
    kept M-orthogonal to them.
    """
    K = _as_operator(K)
    M = _as_operator(M)
    n = K.shape[0]
    if not 1 <= count <= n:
        raise ValueError(f"count must be in [1, {n}], got {count}")
    p = min(n, block or max(2 * count, count + 4))
    F = linalg.cholesky(K)
    X = stream(seed, "eigen").standard_normal((n, p))

    locked = np.zeros((n, 0))
    locked_vals = np.zeros(0)
    locked_res = np.zeros(0)
    theta = None
    for it in range(1, maxit + 1):
        Y = F.solve(M @ X)
        Y = _m_orthogonalize(M, Y, locked)
        theta, X = _rayleigh_ritz(K, M, Y)
        KX = K @ X
        R = KX - (M @ X) * theta
        res = np.linalg.norm(R, axis=0) / np.maximum(np.linalg.norm(KX, axis=0), 1e-300)
        need = count - locked.shape[1]
        nconv = 0
        while nconv < need and res[nconv] <= tol:
            nconv += 1
        if nconv:
            locked = np.hstack([locked, X[:, :nconv]])
            locked_vals = np.r_[locked_vals, theta[:nconv]]
            locked_res = np.r_[locked_res, res[:nconv]]
            X = X[:, nconv:]
        if locked.shape[1] >= count:
            return EigenResult(locked_vals[:count], locked[:, :count], locked_res[:count], it)
        if X.shape[1] + locked.shape[1] > n:
            X = X[:, :n - locked.shape[1]]
    raise linalg.ConvergenceError(
        f"block inverse iteration did not converge in {maxit} iterations "
        f"({locked.shape[1]} of {count} pairs locked)", maxit,
        float(res[0]) if theta is not None else None)


def _pencil_iteration(apply, A, B, v, tol, maxit, what):
    # v <- apply(v) normalized in the B norm; returns the final Rayleigh quotient
    q_old = None
    for it in range(1, maxit + 1):
        v = apply(v)
        v /= np.sqrt(v @ (B @ v))
        q = float(v @ (A @ v))
        if q_old is not None and abs(q - q_old) <= tol * abs(q):
            return q, v, it
        q_old = q
    raise linalg.ConvergenceError(f"{what} did not converge in {maxit} iterations", maxit,
                                  abs(q - q_old) / abs(q))


def extreme_rayleigh(K, L, tol=DEFAULT_TOL, maxit=MAX_ITER, seed=0):
    """Smallest and largest values of ``(Kv, v) / (Lv, v)``.

    ``beta`` comes from power iteration on ``L^-1 K``; ``alpha`` from inverse
    iteration, i.e. power iteration on ``K^-1 L``.  Both stop when the
    Rayleigh quotient changes by less than ``tol`` relatively.
    """
    FL = linalg.cholesky(L)
    FK = linalg.cholesky(K)
    rng = stream(seed, "eigen")
    n = K.shape[0]
    beta, _, _ = _pencil_iteration(lambda v: FL.solve(K @ v), K, L, rng.standard_normal(n),
                                   tol, maxit, "power iteration")
    inv_alpha, _, _ = _pencil_iteration(lambda v: FK.solve(L @ v), L, K,
                                        rng.standard_normal(n), tol, maxit,
                                        "inverse power iteration")
    # the second run normalizes in the K norm, so it returns (Lv, v) / (Kv, v)
    return 1.0 / inv_alpha, beta
