"""Localized correctors, the multiscale basis and the Ritz projection.

A corrector ``q = Q_k^T v_H`` of element ``T`` is the solution of

    find q in W(U_k(T)):  (K q, w) = (K_T v_H, w)  for all w in W(U_k(T)),

where ``W`` is the kernel of the quasi-interpolant restricted to unknowns
living in the patch.  The constraint ``I q = 0`` is imposed with Lagrange
multipliers.  Elements whose patches coincide share one factorization.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import logging
import time

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from netwave import linalg
from netwave.coarse import build_patch

log = logging.getLogger(__name__)

# patch saddle problems with more unknowns switch to projected CG
DIRECT_LIMIT = 50_000


class CorrectorError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class PatchProblem:
    """Patch-restricted data of one corrector problem."""

    patch: object
    dofs: np.ndarray         # free fine DOFs in the patch (ascending)
    constraint_rows: np.ndarray  # free coarse DOFs constrained in the patch
    K: sp.csr_matrix
    C: sp.csr_matrix

    @property
    def key(self):
        return (tuple(self.patch.lo), tuple(self.patch.hi))


def patch_problem(space, K, patch):
    """Restrict ``K`` and the interpolation rows to the unknowns of ``patch``.

    Unknowns belong to the patch when their network node lies in one of its
    elements; everything else is fixed to zero.
    """
    dofs = space.dofs
    in_patch = np.zeros(dofs.n_nodes, dtype=bool)
    in_patch[patch.nodes] = True
    pd = np.flatnonzero(in_patch[dofs.node_of_free])
    if len(pd) == 0:
        raise CorrectorError(f"patch around {patch.seed} has no free fine unknowns")
    Ip = space.I[:, pd].tocsr()
    rows = np.flatnonzero(np.diff(Ip.indptr) > 0)
    return PatchProblem(patch, pd, rows, K[pd][:, pd].tocsr(), Ip[rows].tocsr())


def _solve_patch(prob, rhs, method):
    """Solve the saddle problem for several right-hand sides at once."""
    if prob.K.shape[0] < len(prob.constraint_rows):
        raise CorrectorError(
            f"patch {prob.key} has fewer fine unknowns than constraints; the saddle "
            "system is singular")
    if method == "auto":
        method = "direct" if prob.K.shape[0] + prob.C.shape[0] <= DIRECT_LIMIT else "cg"
    try:
        X = linalg.solve_saddle(prob.K, prob.C, rhs, method=method)
    except linalg.LinAlgError as exc:
        raise CorrectorError(f"corrector solve failed on patch {prob.key}: {exc}") from exc
    res = prob.K @ X - rhs
    # residual of the primal equation projected onto ker C is what matters;
    # report the constraint violation and the raw norm for diagnostics
    viol = np.abs(prob.C @ X).max() if X.size else 0.0
    return X, float(viol), float(np.linalg.norm(res))


class ElementStiffness:
    """``K_T`` restricted to the free unknowns, built from owner-tagged forms."""

    def __init__(self, forms, mesh, dofs):
        self.forms = forms
        self.dofs = dofs
        elem = mesh.node_element[forms.owner]
        self.order = np.argsort(elem, kind="stable")
        self.ptr = np.r_[0, np.cumsum(np.bincount(elem, minlength=mesh.n_elements))]
        pos = np.full(dofs.n_full, -1)
        pos[dofs.free] = np.arange(dofs.n_free)
        self.pos = pos

    def __call__(self, e):
        idx = self.order[self.ptr[e]:self.ptr[e + 1]]
        r = self.pos[self.forms.rows[idx]]
        c = self.pos[self.forms.cols[idx]]
        keep = (r >= 0) & (c >= 0)
        n = self.dofs.n_free
        A = sp.csr_matrix((self.forms.vals[idx][keep], (r[keep], c[keep])), shape=(n, n))
        return ((A + A.T) * 0.5).tocsr()


def element_load(space, Kt, e):
    """Columns ``i`` with ``K_T phi_i != 0`` and the fine vectors ``K_T phi_i``.

    Besides the corners of ``T`` this includes basis functions that only
    reach ``T`` through edges leaving the element.
    """
    A = (Kt(e) @ space.P).tocsc()
    A.eliminate_zeros()
    cols = np.flatnonzero(np.diff(A.indptr) > 0)
    return cols, A[:, cols]


def compute_element_corrector(prob, K_T, v_H, method="auto"):
    """``Q_k^T v_H`` as a vector over the free fine unknowns.

    ``v_H`` is a fine representation (free fine unknowns) of a coarse
    function, or a matrix of several of them.
    """
    v = np.asarray(v_H, dtype=float)
    rhs = (K_T @ v)[prob.dofs]
    X, _, _ = _solve_patch(prob, rhs, method)
    out = np.zeros(v.shape)
    out[prob.dofs] = X
    return out


@dataclass(frozen=True, eq=False)
class CorrectorSet:
    """Columns ``Q_k phi_i`` for every free coarse DOF ``i``."""

    Q: sp.csr_matrix
    k: int
    patch_sizes: np.ndarray       # fine unknowns per element patch
    constraint_violation: np.ndarray
    residuals: np.ndarray
    factorizations: int
    seconds: float

    def column(self, i):
        return self.Q[:, i].toarray().ravel()


def _element_job(space, K, Kt, k, method, group):
    e0 = group[0]
    prob = patch_problem(space, K, build_patch(space.mesh, ("element", e0), k))
    cols, rhs = [], []
    for e in group:
        cj, A = element_load(space, Kt, e)
        cols.append(cj)
        rhs.append(A[prob.dofs].toarray())
    if not any(len(c) for c in cols):
        return prob, cols, None, 0.0, 0.0
    X, viol, res = _solve_patch(prob, np.hstack(rhs), method)
    return prob, cols, X, viol, res


def compute_correctors(space, forms, k, method="auto", workers=1):
    """Localized correctors of all free coarse basis functions.

    Element contributions are summed in element order, so the result does
    not depend on ``workers``.
    """
    t0 = time.perf_counter()
    mesh = space.mesh
    dofs = space.dofs
    K = dofs.restrict_matrix(forms.matrix())
    Kt = ElementStiffness(forms, mesh, dofs)

    groups = {}
    for e in range(mesh.n_elements):
        p = build_patch(mesh, ("element", e), k)
        groups.setdefault((tuple(p.lo), tuple(p.hi)), []).append(e)
    jobs = list(groups.values())

    def run(group):
        return _element_job(space, K, Kt, k, method, group)

    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(g) for g in jobs]

    # deterministic reduction in element order
    per_elem = {}
    for group, (prob, cols, X, viol, res) in zip(jobs, results):
        off = 0
        for e, cj in zip(group, cols):
            Xe = None if len(cj) == 0 else X[:, off:off + len(cj)]
            per_elem[e] = (prob, cj, Xe, viol, res)
            off += len(cj)
    rows, colsl, vals = [], [], []
    sizes = np.zeros(mesh.n_elements, dtype=np.int64)
    viols = np.zeros(mesh.n_elements)
    ress = np.zeros(mesh.n_elements)
    for e in range(mesh.n_elements):
        prob, cj, Xe, viol, res = per_elem[e]
        sizes[e] = len(prob.dofs)
        viols[e], ress[e] = viol, res
        if Xe is None:
            continue
        rows.append(np.repeat(prob.dofs, len(cj)))
        colsl.append(np.tile(cj, len(prob.dofs)))
        vals.append(Xe.ravel())
    Q = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(colsl))),
                      shape=(dofs.n_free, space.m0))
    secs = time.perf_counter() - t0
    log.info("correctors: k=%d, %d elements, %d factorizations, nnz(Q)=%d, %.2fs",
             k, mesh.n_elements, len(jobs), Q.nnz, secs)
    return CorrectorSet(Q, k, sizes, viols, ress, len(jobs), secs)


def compute_global_correctors(space, K, method="direct"):
    """Ideal correctors ``Q phi_i`` from one constrained solve over the domain."""
    t0 = time.perf_counter()
    rhs = (K @ space.P).toarray()
    X = linalg.solve_saddle(K, space.I, rhs, method=method)
    viol = np.abs(space.I @ X).max() if X.size else 0.0
    return CorrectorSet(sp.csr_matrix(X), -1, np.array([K.shape[0]]), np.array([viol]),
                        np.array([np.linalg.norm(K @ X - rhs)]), 1, time.perf_counter() - t0)


@dataclass(frozen=True, eq=False)
class MultiscaleBasis:
    """Corrected basis ``B = P - Q`` and the Galerkin operators on it."""

    space: object
    correctors: CorrectorSet
    B: sp.csr_matrix
    K_ms: np.ndarray
    M_ms: np.ndarray
    K: sp.csr_matrix        # fine operators on the free unknowns
    M: sp.csr_matrix
    k: int
    _chol: tuple = field(repr=False, default=None)

    @property
    def H(self):
        return self.space.mesh.H

    @property
    def dim(self):
        return self.B.shape[1]

    def to_fine(self, c):
        return self.B @ c

    def solve_K(self, b):
        return sla.cho_solve(self._chol, b)


def _galerkin(space, corr, K, M, k):
    B = (space.P - corr.Q).tocsr()
    KB = K @ B
    K_ms = (B.T @ KB).toarray()
    M_ms = (B.T @ (M @ B)).toarray()
    K_ms = 0.5 * (K_ms + K_ms.T)
    M_ms = 0.5 * (M_ms + M_ms.T)
    try:
        chol = sla.cho_factor(K_ms, lower=True)
    except np.linalg.LinAlgError as exc:
        raise CorrectorError("projected stiffness is not positive definite") from exc
    log.info("multiscale basis: dim %d, nnz(B)=%d (%.1f per column)",
             B.shape[1], B.nnz, B.nnz / max(B.shape[1], 1))
    return MultiscaleBasis(space, corr, B, K_ms, M_ms, K, M, k, chol)


def build_multiscale_basis(space, forms, M, k, method="auto", workers=1):
    """Localized multiscale space ``V_{H,k}^ms`` with ``K_ms`` and ``M_ms``.

    ``forms`` are the owner-tagged stiffness forms over all DOFs and ``M``
    the full mass matrix; both are restricted to the free unknowns here.
    """
    dofs = space.dofs
    corr = compute_correctors(space, forms, k, method=method, workers=workers)
    K = dofs.restrict_matrix(forms.matrix())
    return _galerkin(space, corr, K, dofs.restrict_matrix(M), k)


def build_ideal_basis(space, forms, M):
    """Multiscale space built from global (non-localized) correctors."""
    dofs = space.dofs
    K = dofs.restrict_matrix(forms.matrix())
    corr = compute_global_correctors(space, K)
    return _galerkin(space, corr, K, dofs.restrict_matrix(M), -1)


def ritz_project(basis, v, K=None):
    """Coefficients ``c`` with ``K_ms c = B^T K v``."""
    K = basis.K if K is None else K
    return basis.solve_K(basis.B.T @ (K @ v))
