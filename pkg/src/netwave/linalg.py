"""Sparse symmetric linear algebra.

Direct factorizations are backed by SuperLU (``scipy.sparse.linalg.splu``)
with a symmetric fill-reducing ordering; systems with at most
``DENSE_LIMIT`` unknowns go through LAPACK instead.  Conjugate gradients
and the constraint-preconditioned variant used for large saddle-point
problems are implemented here.
"""
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

DENSE_LIMIT = 500
DEFAULT_TOL = 1e-10


class LinAlgError(RuntimeError):
    pass


class NotPositiveDefiniteError(LinAlgError):
    pass


class ConvergenceError(LinAlgError):
    def __init__(self, msg, iterations=None, residual=None):
        super().__init__(msg)
        self.iterations = iterations
        self.residual = residual


@dataclass(frozen=True, eq=False)
class Factorization:
    """Numeric factors of a symmetric matrix.

    ``kind`` is ``"cholesky"`` or ``"ldl"``; ``perm`` is the column
    ordering chosen by the sparse code (identity for dense factors).
    """

    kind: str
    n: int
    perm: np.ndarray
    matrix: object
    _apply: Callable

    def solve(self, b, tol=DEFAULT_TOL, max_refine=3):
        b = np.asarray(b, dtype=float)
        x = self._apply(b)
        # iterative refinement enforces |Ax - b| <= tol |b| column by column
        bnorm = np.linalg.norm(b, axis=0)
        for _ in range(max_refine):
            r = b - self.matrix @ x
            if np.all(np.linalg.norm(r, axis=0) <= tol * bnorm):
                break
            x = x + self._apply(r)
        return x


def _as_sparse(A):
    return A if sp.issparse(A) else sp.csc_matrix(np.asarray(A, dtype=float))


def _check_square(A):
    if A.shape[0] != A.shape[1]:
        raise LinAlgError(f"matrix must be square, got {A.shape}")


def cholesky(A):
    """Factor a symmetric positive definite matrix.

    Raises :class:`NotPositiveDefiniteError` when a non-positive pivot shows
    up, which callers use as an indefiniteness test.
    """
    _check_square(A)
    n = A.shape[0]
    if n <= DENSE_LIMIT:
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        try:
            c = sla.cho_factor(dense, lower=True, check_finite=True)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefiniteError(str(exc)) from exc
        return Factorization("cholesky", n, np.arange(n), dense,
                             lambda b: sla.cho_solve(c, b))
    Acsc = _as_sparse(A).tocsc()
    try:
        lu = spla.splu(Acsc, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                       options=dict(SymmetricMode=True))
    except RuntimeError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc
    # with diagonal pivoting on a symmetric ordering, diag(U) is the D of LDL^T
    if not (np.all(lu.perm_r == lu.perm_c) and np.all(lu.U.diagonal() > 0)):
        raise NotPositiveDefiniteError("matrix is not positive definite")
    return Factorization("cholesky", n, lu.perm_c, Acsc, lu.solve)


def ldl(A):
    """Factor a symmetric, possibly indefinite, nonsingular matrix."""
    _check_square(A)
    n = A.shape[0]
    if n <= DENSE_LIMIT:
        dense = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        lu = sla.lu_factor(dense)
        if np.any(np.diag(lu[0]) == 0):
            raise LinAlgError("matrix is singular")
        return Factorization("ldl", n, np.arange(n), dense,
                             lambda b: sla.lu_solve(lu, b))
    Acsc = _as_sparse(A).tocsc()
    try:
        lu = spla.splu(Acsc, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise LinAlgError(str(exc)) from exc
    return Factorization("ldl", n, lu.perm_c, Acsc, lu.solve)


def solve(F, b, tol=DEFAULT_TOL):
    return F.solve(b, tol=tol)


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float


def cg(A, b, precond=None, tol=DEFAULT_TOL, maxit=None, x0=None):
    """Preconditioned conjugate gradients for SPD ``A``.

    ``precond`` is a callable applying an SPD approximation of ``A^{-1}``.
    Stops when ``|b - Ax| <= tol |b|``.
    """
    b = np.asarray(b, dtype=float)
    n = len(b)
    maxit = 10 * n if maxit is None else maxit
    apply_A = (lambda v: A @ v)
    precond = precond or (lambda r: r)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_A(x)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0)
    z = precond(r)
    p = z.copy()
    rz = r @ z
    for it in range(1, maxit + 1):
        Ap = apply_A(p)
        pAp = p @ Ap
        if pAp <= 0:
            raise ConvergenceError("cg breakdown: non-positive curvature", it,
                                   np.linalg.norm(r) / bnorm)
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return CGResult(x, it, res)
        z = precond(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"cg did not converge in {maxit} iterations", maxit, res)


def projected_cg(A, C, b, tol=DEFAULT_TOL, maxit=None):
    """Solve ``A x + C^T lam = b``, ``C x = 0`` by CG restricted to ker C.

    Uses the constraint preconditioner built on the Jacobi diagonal of ``A``
    so that every iterate stays in the null space of ``C``.  ``C`` must have
    full row rank.  Returns a :class:`CGResult` for the primal unknown.
    """
    b = np.asarray(b, dtype=float)
    dinv = 1.0 / A.diagonal()
    C = sp.csr_matrix(C)
    CDC = (C @ sp.diags(dinv) @ C.T).toarray()
    CDC_f = sla.cho_factor(CDC)

    def range_part(r):
        # component of r in range(C^T), in the D^-1 weighted least-squares sense
        return C.T @ sla.cho_solve(CDC_f, C @ (dinv * r))

    def precond(r):
        return dinv * (r - range_part(r))

    n = len(b)
    maxit = 10 * n if maxit is None else maxit
    x = np.zeros(n)
    r = b - range_part(b)
    z = precond(r)
    p = z.copy()
    rz = r @ z
    ref = np.sqrt(abs(rz)) or 1.0
    if rz == 0.0:
        return CGResult(x, 0, 0.0)
    for it in range(1, maxit + 1):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        # residual update keeps r free of the multiplier part, which
        # otherwise grows and destroys the projection in floating point
        r -= range_part(r)
        z = precond(r)
        rz_new = r @ z
        # projected residual in the preconditioner norm
        res = np.sqrt(abs(rz_new)) / ref
        if res <= tol:
            return CGResult(x, it, res)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"projected cg did not converge in {maxit} iterations", maxit, res)


def saddle_matrix(A, C, scale=None):
    """Assemble ``[[A, s C^T], [s C, 0]]`` with the constraint rows scaled by ``s``.

    The default ``s`` matches the magnitude of ``C`` to that of ``A`` so the
    indefinite factorization keeps the constraint residual small.
    """
    C = sp.csr_matrix(C)
    if scale is None:
        a = abs(A).max() if A.nnz else 1.0
        c = abs(C).max() if C.nnz else 1.0
        scale = a / c
    m = C.shape[0]
    K = sp.bmat([[A, scale * C.T], [scale * C, sp.csr_matrix((m, m))]], format="csc")
    return K, scale


def _schur_saddle(A, C, B, tol):
    # block elimination with a Cholesky factor of A and the dense Schur
    # complement C A^-1 C^T (few constraint rows)
    F = cholesky(A)
    C = sp.csr_matrix(C)
    if C.shape[0] == 0:
        return F.solve(B, tol=tol)
    AiCt = F.solve(C.T.toarray(), tol=tol)
    AiB = F.solve(B, tol=tol)
    S = C @ AiCt
    S = 0.5 * (S + S.T)
    try:
        Sf = sla.cho_factor(S, lower=True)
    except np.linalg.LinAlgError as exc:
        raise LinAlgError("constraint matrix is rank deficient") from exc
    X = AiB - AiCt @ sla.cho_solve(Sf, C @ AiB)
    # refine the multipliers: an ill-conditioned A leaves C X at the level
    # cond(S) * eps, and correcting along A^-1 C^T keeps the first block exact
    for _ in range(3):
        r = C @ X
        if np.abs(r).max() <= 1e-15 * max(np.abs(X).max(), 1.0):
            break
        X -= AiCt @ sla.cho_solve(Sf, r)
    return X


def solve_saddle(A, C, B, method="direct", tol=DEFAULT_TOL):
    """Solve ``A X + C^T L = B``, ``C X = 0`` for one or several right-hand sides.

    ``method`` is ``"direct"`` (block elimination, needs SPD ``A``),
    ``"ldl"`` (indefinite factorization of the whole saddle matrix) or
    ``"cg"`` (projected conjugate gradients).
    """
    B = np.asarray(B, dtype=float)
    single = B.ndim == 1
    B2 = B[:, None] if single else B
    n = A.shape[0]
    if method == "direct":
        X = _schur_saddle(A, C, B2, tol)
    elif method == "ldl":
        K, _ = saddle_matrix(A, C)
        F = ldl(K)
        rhs = np.vstack([B2, np.zeros((C.shape[0], B2.shape[1]))])
        X = F.solve(rhs, tol=tol)[:n]
    elif method == "cg":
        X = np.column_stack([projected_cg(A, C, B2[:, k], tol=tol).x
                             for k in range(B2.shape[1])])
    else:
        raise ValueError(f"unknown saddle-point method {method!r}")
    return X[:, 0] if single else X


def write_matrix_market(path, A):
    import scipy.io
    scipy.io.mmwrite(str(path), sp.coo_matrix(A), symmetry="general")


def read_matrix_market(path):
    import scipy.io
    return sp.csr_matrix(scipy.io.mmread(str(path)))
