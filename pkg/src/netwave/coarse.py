"""Uniform coarse mesh, bilinear basis on the network, quasi-interpolation
and element patches.

Elements are the half-open boxes ``[a, a + H)`` per axis, closed on the
domain boundary, so every network node belongs to exactly one element.
Elements and mesh nodes are numbered lexicographically with axis 0 fastest.
"""
from dataclasses import dataclass
import itertools
import math
import warnings

import numpy as np
import scipy.sparse as sp

from netwave.network import BOUNDARY_TOL

# local Gram matrices with a larger condition number count as singular
GRAM_COND_LIMIT = 1e12


class MeshError(ValueError):
    pass


def _corner_offsets(d):
    # axis 0 fastest, matching the lexicographic node numbering
    return np.array([off[::-1] for off in itertools.product((0, 1), repeat=d)], dtype=np.int64)


@dataclass(frozen=True, eq=False)
class CoarseMesh:
    H: float
    dim: int
    n_per_axis: int
    node_element: np.ndarray    # element id of every network node
    local_coords: np.ndarray    # reference coordinates in [0, 1]^d
    element_ptr: np.ndarray     # CSR-style pointers into element_members
    element_members: np.ndarray
    constrained: np.ndarray     # bool flag per mesh node

    @property
    def n_elements(self):
        return self.n_per_axis**self.dim

    @property
    def n_coarse_nodes(self):
        return (self.n_per_axis + 1) ** self.dim

    @property
    def free_coarse(self):
        return np.flatnonzero(~self.constrained)

    @property
    def refinement_level(self):
        return int(round(math.log2(self.n_per_axis)))

    def element_nodes(self, e):
        return self.element_members[self.element_ptr[e]:self.element_ptr[e + 1]]

    def element_counts(self):
        return np.diff(self.element_ptr)

    def element_index(self, e):
        N = self.n_per_axis
        return np.array([(e // N**a) % N for a in range(self.dim)])

    def element_id(self, idx):
        N = self.n_per_axis
        return int(sum(int(idx[a]) * N**a for a in range(self.dim)))

    def node_index(self, j):
        N1 = self.n_per_axis + 1
        return np.array([(j // N1**a) % N1 for a in range(self.dim)])

    def node_id(self, idx):
        N1 = self.n_per_axis + 1
        return np.asarray(idx) @ (N1 ** np.arange(self.dim))

    def coarse_node_coords(self):
        N1 = self.n_per_axis + 1
        idx = np.array([(np.arange(N1**self.dim) // N1**a) % N1 for a in range(self.dim)]).T
        return idx * self.H

    def element_corners(self, e):
        return self.node_id(self.element_index(e) + _corner_offsets(self.dim))

    def elements_around_node(self, j):
        """Elements having mesh node ``j`` as a corner."""
        idx = self.node_index(j)
        out = []
        for off in _corner_offsets(self.dim):
            e = idx - off
            if np.all(e >= 0) and np.all(e < self.n_per_axis):
                out.append(self.element_id(e))
        return sorted(out)

    def basis_matrix(self):
        """Values of every mesh-node basis function at every network node,
        shape ``(n_nodes, n_coarse_nodes)``."""
        n = len(self.node_element)
        offs = _corner_offsets(self.dim)
        base = np.array([(self.node_element // self.n_per_axis**a) % self.n_per_axis
                         for a in range(self.dim)]).T
        rows, cols, vals = [], [], []
        for off in offs:
            w = np.prod(np.where(off == 1, self.local_coords, 1.0 - self.local_coords), axis=1)
            rows.append(np.arange(n))
            cols.append(self.node_id(base + off))
            vals.append(w)
        B = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(n, self.n_coarse_nodes))
        B.eliminate_zeros()
        return B


def build_mesh(net, H, R0=None):
    """Coarse mesh of size ``H = 2^-i`` over the unit hypercube.

    A mesh node is constrained when it lies on a boundary face of an
    element that contains a Dirichlet node, so the Dirichlet condition is
    imposed on whole element faces.
    """
    level = -math.log2(H)
    if level < 1 or abs(level - round(level)) > 1e-12:
        raise MeshError(f"H must be 2^-i with i >= 1, got {H}")
    N = 2 ** int(round(level))
    H = 1.0 / N
    if R0 is not None and H < R0:
        warnings.warn(f"H = {H} is below the network homogeneity scale R0 = {R0}")
    d = net.dim
    scaled = net.nodes * N
    idx = np.clip(np.floor(scaled).astype(np.int64), 0, N - 1)
    local = scaled - idx
    node_element = idx @ (N ** np.arange(d))

    counts = np.bincount(node_element, minlength=N**d)
    if np.any(counts == 0):
        empty = int(np.flatnonzero(counts == 0)[0])
        raise MeshError(
            f"element {empty} contains no network nodes; coarsen H or densify the network")
    order = np.argsort(node_element, kind="stable")
    ptr = np.r_[0, np.cumsum(counts)]

    constrained = np.zeros((N + 1) ** d, dtype=bool)
    N1 = N + 1
    for x in net.nodes[net.boundary]:
        cell = np.clip(np.floor(x * N).astype(np.int64), 0, N - 1)
        for axis in range(d):
            for value, side in ((0.0, 0), (1.0, 1)):
                if abs(x[axis] - value) > BOUNDARY_TOL:
                    continue
                # every element face on this side that contains x
                ranges = []
                for b in range(d):
                    if b == axis:
                        ranges.append([cell[b] + side])
                        continue
                    cand = [cell[b]]
                    on_line = abs(x[b] * N - round(x[b] * N)) <= BOUNDARY_TOL * N
                    if on_line and 0 < round(x[b] * N) == cell[b]:
                        cand.append(cell[b] - 1)
                    ranges.append(cand)
                for face_lo in itertools.product(*ranges):
                    face_lo = np.array(face_lo)
                    for off in itertools.product((0, 1), repeat=d - 1):
                        node = face_lo.copy()
                        others = [b for b in range(d) if b != axis]
                        node[others] += np.array(off, dtype=np.int64)
                        constrained[int(node @ (N1 ** np.arange(d)))] = True

    return CoarseMesh(H=H, dim=d, n_per_axis=N, node_element=node_element,
                      local_coords=local, element_ptr=ptr, element_members=order,
                      constrained=constrained)


def prolong(mesh, coeffs):
    """Evaluate ``sum_j c_j phi_j`` at the network nodes; ``coeffs`` are
    indexed by the free mesh nodes."""
    coeffs = np.asarray(coeffs, dtype=float)
    free = mesh.free_coarse
    if coeffs.shape[0] != len(free):
        raise ValueError(f"expected {len(free)} coarse coefficients, got {coeffs.shape[0]}")
    return mesh.basis_matrix()[:, free] @ coeffs


# ---------------------------------------------------------------------------
# quasi-interpolation


@dataclass(frozen=True, eq=False)
class Interpolator:
    """Scott-Zhang type interpolation onto the free coarse basis.

    ``matrix`` has shape ``(m0, n_nodes)``: row ``j`` holds the weights of the
    nodal functional of free mesh node ``j`` (all network nodes as columns).
    ``dual`` maps ``(element, local corner)`` to the dual function values on
    that element's nodes; ``skipped`` lists elements whose Gram matrix was
    singular.
    """

    matrix: sp.csr_matrix
    averaging: bool
    dual: dict
    used_elements: dict   # free mesh node -> elements averaged over
    skipped: tuple
    gram_condition: np.ndarray

    def __call__(self, v):
        return self.matrix @ v


def _element_gram(mesh, basis, mass, e):
    nodes = mesh.element_nodes(e)
    corners = mesh.element_corners(e)
    Phi = basis[nodes][:, corners].toarray()
    G = Phi.T @ (mass[nodes, None] * Phi)
    return nodes, corners, Phi, G


def build_interpolator(mesh, net, mass=None, averaging=True):
    """Dual-basis quasi-interpolant.

    For an element ``T`` the dual functions ``psi_a`` live in the span of the
    ``2^d`` corner functions and satisfy ``(M_T psi_a, phi_b) = delta_ab``.
    With ``averaging`` the functional of a mesh node is the mean over all
    elements in the support of its basis function whose Gram matrix is
    regular; otherwise the single element containing the mesh node is used.
    """
    if mass is None:
        mass = net.node_mass()
    elif sp.issparse(mass):
        mass = mass.diagonal()
    mass = np.asarray(mass, dtype=float)[:net.n_nodes]
    basis = mesh.basis_matrix().tocsc()
    basis = sp.csr_matrix(basis)

    dual = {}
    cond = np.full(mesh.n_elements, np.inf)
    weights = {}
    for e in range(mesh.n_elements):
        nodes, corners, Phi, G = _element_gram(mesh, basis, mass, e)
        c = np.linalg.cond(G)
        cond[e] = c
        if len(nodes) < len(corners) or not c < GRAM_COND_LIMIT:
            continue
        Ginv = np.linalg.solve(G, np.eye(len(corners)))
        psi = Phi @ Ginv
        for a, j in enumerate(corners):
            dual[(e, a)] = psi[:, a]
            weights[(e, int(j))] = (nodes, mass[nodes] * psi[:, a])
    skipped = tuple(int(e) for e in np.flatnonzero(~(cond < GRAM_COND_LIMIT)))

    free = mesh.free_coarse
    rows, cols, vals = [], [], []
    used = {}
    N = mesh.n_per_axis
    for r, j in enumerate(free):
        if averaging:
            cand = mesh.elements_around_node(j)
        else:
            idx = np.clip(mesh.node_index(j), 0, N - 1)
            cand = [mesh.element_id(idx)]
        good = [e for e in cand if (e, int(j)) in weights]
        if not good:
            raise MeshError(f"no element with a regular Gram matrix supports mesh node {j} "
                            f"(elements {cand})")
        used[int(j)] = good
        for e in good:
            nodes, w = weights[(e, int(j))]
            rows.append(np.full(len(nodes), r))
            cols.append(nodes)
            vals.append(w / len(good))
    I = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(len(free), net.n_nodes))
    return Interpolator(I, averaging, dual, used, skipped, cond)


# ---------------------------------------------------------------------------
# coarse space in terms of constrained unknowns


@dataclass(frozen=True, eq=False)
class CoarseSpace:
    """Prolongation and interpolation acting on the free fine unknowns.

    ``P`` maps free coarse DOFs to free fine DOFs, ``I`` goes the other way;
    both act componentwise for vector problems.
    """

    mesh: CoarseMesh
    dofs: object          # operators.DofMap
    P: sp.csr_matrix
    I: sp.csr_matrix
    coarse_free_dofs: np.ndarray

    @property
    def m0(self):
        return self.P.shape[1]


def coarse_space(mesh, interp, dofs):
    c = dofs.components
    eye = sp.identity(c, format="csr")
    free_nodes = mesh.free_coarse
    coarse_dofs = (c * free_nodes[:, None] + np.arange(c)).ravel()
    B = mesh.basis_matrix()
    P = sp.kron(B, eye, format="csr")[dofs.free][:, coarse_dofs]
    I_full = sp.kron(interp.matrix, eye, format="csr")
    I = I_full[:, dofs.free]
    return CoarseSpace(mesh, dofs, P.tocsr(), I.tocsr(), coarse_dofs)


# ---------------------------------------------------------------------------
# patches


@dataclass(frozen=True, eq=False)
class Patch:
    """Box of coarse elements obtained by ``k`` layers of dilation."""

    seed: tuple          # ("element", e) or ("node", j)
    k: int
    lo: np.ndarray       # inclusive lower element multi-index
    hi: np.ndarray       # inclusive upper element multi-index
    elements: np.ndarray
    nodes: np.ndarray    # network nodes in the patch, ascending (local -> global)
    interior_coarse: np.ndarray  # free mesh nodes strictly inside the patch

    def local_index(self, global_nodes):
        pos = np.searchsorted(self.nodes, global_nodes)
        ok = (pos < len(self.nodes)) & (self.nodes[np.minimum(pos, len(self.nodes) - 1)] == global_nodes)
        return np.where(ok, pos, -1)

    def __len__(self):
        return len(self.elements)


def build_patch(mesh, seed, k):
    """``U_k`` of an element (``seed=("element", e)``) or of a mesh node
    (``seed=("node", j)``); ``k = 0`` gives the seed's own elements."""
    if k < 0:
        raise ValueError("patch size k must be non-negative")
    kind, ident = seed
    N = mesh.n_per_axis
    k_req = int(k)
    if kind == "element":
        lo = hi = mesh.element_index(ident)
    elif kind == "node":
        idx = mesh.node_index(ident)
        lo = np.maximum(idx - 1, 0)
        hi = np.minimum(idx, N - 1)
        k = k - 1 if k > 0 else 0
    else:
        raise ValueError(f"unknown patch seed kind {kind!r}")
    lo = np.maximum(lo - k, 0)
    hi = np.minimum(hi + k, N - 1)
    ranges = [np.arange(lo[a], hi[a] + 1) for a in range(mesh.dim)]
    grids = np.meshgrid(*ranges, indexing="ij")
    elems = sum(g.ravel() * N**a for a, g in enumerate(grids))
    elems = np.sort(elems)
    nodes = np.sort(np.concatenate([mesh.element_nodes(e) for e in elems]))
    # interior mesh nodes: indices strictly between the patch corners,
    # or on the domain boundary where the patch touches it
    N1 = N + 1
    nranges = []
    for a in range(mesh.dim):
        first = lo[a] if lo[a] == 0 else lo[a] + 1
        last = hi[a] + 1 if hi[a] == N - 1 else hi[a]
        nranges.append(np.arange(first, last + 1))
    ngrids = np.meshgrid(*nranges, indexing="ij")
    cnodes = np.sort(sum(g.ravel() * N1**a for a, g in enumerate(ngrids)))
    cnodes = cnodes[~mesh.constrained[cnodes]]
    return Patch(seed=tuple(seed), k=k_req, lo=lo, hi=hi, elements=elems,
                 nodes=nodes, interior_coarse=cnodes)
