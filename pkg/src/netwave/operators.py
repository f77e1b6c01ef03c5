"""Network operators: lumped mass, weighted graph Laplacian, stiffness.

Every stiffness operator is a sum of node-local parts ``K = sum_x K_x``.
Assembly therefore goes through :class:`LocalForms`, a triplet list where
each entry remembers the node ``x`` that owns it.  Summing all entries
gives ``K``; summing the entries owned by nodes of a coarse element ``T``
gives the element stiffness ``K_T`` needed by the corrector problems.

Vector-valued unknowns use node-major ordering: DOF ``c * node + comp``.
"""
from dataclasses import dataclass
import math

import numpy as np
import scipy.sparse as sp

from netwave.network import NetworkError

KB_PAIR_CONVENTIONS = ("ordered", "unordered")


@dataclass(frozen=True, eq=False)
class LocalForms:
    """Owner-tagged COO triplets of a node-local quadratic form."""

    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    owner: np.ndarray  # owning network node of each triplet
    n: int             # number of DOFs
    components: int

    def matrix(self, mask=None):
        r, c, v = self.rows, self.cols, self.vals
        if mask is not None:
            r, c, v = r[mask], c[mask], v[mask]
        A = sp.csr_matrix((v, (r, c)), shape=(self.n, self.n))
        # exact symmetry regardless of floating-point summation order
        return ((A + A.T) * 0.5).tocsr()

    def __add__(self, other):
        if (self.n, self.components) != (other.n, other.components):
            raise ValueError("cannot add local forms of different shape")
        return LocalForms(np.r_[self.rows, other.rows], np.r_[self.cols, other.cols],
                          np.r_[self.vals, other.vals], np.r_[self.owner, other.owner],
                          self.n, self.components)

    def scaled(self, s):
        return LocalForms(self.rows, self.cols, s * self.vals, self.owner, self.n, self.components)


@dataclass(frozen=True)
class ElasticParams:
    youngs_modulus: float = 210e9
    wire_radius: float = 0.5e-3
    kb_pair_convention: str = "ordered"

    def __post_init__(self):
        if not (self.youngs_modulus > 0 and self.wire_radius > 0):
            raise ValueError("Young's modulus and wire radius must be positive")
        if self.kb_pair_convention not in KB_PAIR_CONVENTIONS:
            raise ValueError(f"kb_pair_convention must be one of {KB_PAIR_CONVENTIONS}")

    @property
    def area(self):
        return math.pi * self.wire_radius**2

    @property
    def second_moment(self):
        return 0.25 * self.area * self.wire_radius**2

    @property
    def gamma_ke(self):
        return self.youngs_modulus * self.area


# ---------------------------------------------------------------------------
# DOF bookkeeping


@dataclass(frozen=True, eq=False)
class DofMap:
    """Maps full DOFs (node-major) to the Dirichlet-free unknowns."""

    n_nodes: int
    components: int
    free: np.ndarray

    @classmethod
    def for_network(cls, net, components=1):
        free_nodes = net.free_nodes
        free = (components * free_nodes[:, None] + np.arange(components)).ravel()
        return cls(net.n_nodes, components, free)

    @property
    def n_full(self):
        return self.n_nodes * self.components

    @property
    def n_free(self):
        return len(self.free)

    @property
    def node_of_free(self):
        return self.free // self.components

    def restrict(self, v):
        v = np.asarray(v)
        return v[self.free] if v.ndim == 1 else v[self.free, ...]

    def extend(self, v):
        v = np.asarray(v)
        out = np.zeros((self.n_full,) + v.shape[1:])
        out[self.free] = v
        return out

    def restrict_matrix(self, A):
        A = sp.csr_matrix(A)
        return A[self.free][:, self.free].tocsr()

    def node_field(self, values):
        """Reshape a full DOF vector into ``(n_nodes, components)``."""
        return np.asarray(values).reshape(self.n_nodes, self.components)


# ---------------------------------------------------------------------------
# mass and Laplacian


def assemble_mass(net, components=1):
    """Diagonal lumped mass, ``M_xx = 1/2 sum_{y~x} |x - y|`` per component."""
    if components < 1:
        raise ValueError("components must be a positive integer")
    m = net.node_mass()
    if np.any(m <= 0):
        bad = int(np.flatnonzero(m <= 0)[0])
        raise NetworkError(f"node {bad} is isolated (zero mass)")
    return sp.diags(np.repeat(m, components)).tocsr()


def _edge_weights(net, weight):
    length = net.edge_length
    if np.any(length <= 0):
        raise NetworkError("zero-length edge")
    return weight / length


def _edge_forms(net, w):
    """Local forms of ``1/2 sum_{y~x} w_xy (v(x) - v(y))^2`` owned by x."""
    i, j = net.edges[:, 0], net.edges[:, 1]
    h = 0.5 * w
    rows = np.r_[i, i, j, j, i, i, j, j]
    cols = np.r_[i, j, i, j, i, j, i, j]
    vals = np.r_[h, -h, -h, h, h, -h, -h, h]
    owner = np.r_[i, i, i, i, j, j, j, j]
    return LocalForms(rows, cols, vals, owner, net.n_nodes, 1)


def graph_laplacian_forms(net):
    return _edge_forms(net, _edge_weights(net, 1.0))


def assemble_graph_laplacian(net):
    """Reciprocal edge-length weighted graph Laplacian (unconstrained)."""
    return graph_laplacian_forms(net).matrix()


def scalar_stiffness_forms(net, gamma):
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), (net.n_edges,))
    if np.any(~(gamma > 0)) or np.any(~np.isfinite(gamma)):
        raise ValueError("edge coefficients must be positive and finite")
    return _edge_forms(net, _edge_weights(net, gamma))


def assemble_scalar_stiffness(net, gamma):
    """Weighted Laplacian with edge weight ``gamma_xy / |x - y|``."""
    return scalar_stiffness_forms(net, gamma).matrix()


def random_edge_coefficients(net, rng, low=0.1, high=0.9):
    return rng.uniform(low, high, net.n_edges)


# ---------------------------------------------------------------------------
# elasticity


def _rank_one_forms(dofs, g, weight, owner, n, components):
    """Triplets of ``weight * (g . v[dofs])^2`` for a batch of stencils.

    ``dofs`` and ``g`` have shape ``(batch, k)``.
    """
    k = dofs.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    vals = (weight[:, None, None] * (g[:, :, None] * g[:, None, :])).reshape(len(g), -1).ravel()
    own = np.repeat(owner, k * k)
    keep = vals != 0.0
    return LocalForms(rows[keep], cols[keep], vals[keep], own[keep], n, components)


def _tensile_forms(net, gamma_ke):
    """Linearized Hooke springs along each edge, split evenly between ends."""
    c = 3
    n = net.n_nodes * c
    i, j = net.edges[:, 0], net.edges[:, 1]
    length = net.edge_length
    if np.any(length <= 0):
        raise NetworkError("zero-length edge")
    direction = np.zeros((net.n_edges, 3))
    direction[:, :net.dim] = (net.nodes[i] - net.nodes[j]) / length[:, None]
    # g . v = (v(x) - v(y)) . direction
    g = np.hstack([direction, -direction])
    comps = np.arange(3)
    dofs = np.hstack([c * i[:, None] + comps, c * j[:, None] + comps])
    weight = 0.5 * gamma_ke / length
    return (_rank_one_forms(dofs, g, weight, i, n, c)
            + _rank_one_forms(dofs, g, weight, j, n, c))


def _neighbour_pairs(net):
    """All ordered neighbour pairs ``(x, y, z)`` with ``y != z``.

    Returns arrays of centre nodes, the two neighbours and the indices of
    the edges ``{x, y}`` and ``{x, z}``.
    """
    e = net.n_edges
    centre = np.r_[net.edges[:, 0], net.edges[:, 1]]
    other = np.r_[net.edges[:, 1], net.edges[:, 0]]
    edge_id = np.r_[np.arange(e), np.arange(e)]
    order = np.lexsort((other, centre))
    centre, other, edge_id = centre[order], other[order], edge_id[order]
    starts = np.searchsorted(centre, np.arange(net.n_nodes))
    deg = np.bincount(centre, minlength=net.n_nodes)
    X, Y, Z, EY, EZ = [], [], [], [], []
    for d in np.unique(deg):
        if d < 2:
            continue
        nodes = np.flatnonzero(deg == d)
        a, b = np.nonzero(~np.eye(d, dtype=bool))
        base = starts[nodes][:, None]
        ia, ib = (base + a).ravel(), (base + b).ravel()
        X.append(np.repeat(nodes, len(a)))
        Y.append(other[ia])
        Z.append(other[ib])
        EY.append(edge_id[ia])
        EZ.append(edge_id[ib])
    if not X:
        empty = np.zeros(0, dtype=np.int64)
        return (empty,) * 5
    return tuple(np.concatenate(v) for v in (X, Y, Z, EY, EZ))


def _bending_forms(net, p, plane):
    """Linearized Euler-Bernoulli bending.

    For each centre ``x`` and neighbour pair ``(y, z)``::

        gamma_xyz (|x-y| + |x-z|)/2 * ((v(y)-v(x)).eta_y/|x-y| + (v(z)-v(x)).eta_z/|x-z|)^2

    with ``gamma_xyz = E I (|x-y| + |x-z|)^-2``.  Out of plane
    (``plane="out"``) both ``eta`` are ``e_z``; in plane
    ``eta_y = e_z x (x-y)/|x-y|`` and ``eta_z = e_z x (x-z)/|x-z|``.
    """
    c = 3
    n = net.n_nodes * c
    X, Y, Z, EY, EZ = _neighbour_pairs(net)
    if p.kb_pair_convention == "unordered":
        keep = Y < Z
        X, Y, Z, EY, EZ = X[keep], Y[keep], Z[keep], EY[keep], EZ[keep]
    ly = net.edge_length[EY]
    lz = net.edge_length[EZ]
    weight = p.youngs_modulus * p.second_moment / (ly + lz) ** 2 * (ly + lz) / 2

    ez = np.array([0.0, 0.0, 1.0])
    if plane == "in":
        pos = np.zeros((net.n_nodes, 3))
        pos[:, :net.dim] = net.nodes
        eta_y = np.cross(ez, (pos[X] - pos[Y]) / ly[:, None])
        eta_z = np.cross(ez, (pos[X] - pos[Z]) / lz[:, None])
    elif plane == "out":
        eta_y = eta_z = np.broadcast_to(ez, (len(X), 3))
    else:
        raise ValueError(f"plane must be 'in' or 'out', got {plane!r}")
    gy = eta_y / ly[:, None]
    gz = eta_z / lz[:, None]
    g = np.hstack([-(gy + gz), gy, gz])
    comps = np.arange(3)
    dofs = np.hstack([c * X[:, None] + comps, c * Y[:, None] + comps, c * Z[:, None] + comps])
    return _rank_one_forms(dofs, g, weight, X, n, c)


def elastic_stiffness_forms(net, p, parts=("KE", "KB1", "KB2")):
    """Local forms of the elastic operator; ``parts`` selects the terms."""
    if net.dim != 2:
        raise ValueError("the elastic model is defined for planar networks")
    builders = {
        "KE": lambda: _tensile_forms(net, p.gamma_ke),
        "KB1": lambda: _bending_forms(net, p, "in"),
        "KB2": lambda: _bending_forms(net, p, "out"),
    }
    unknown = set(parts) - set(builders)
    if unknown or not parts:
        raise ValueError(f"unknown or empty elastic term selection {parts!r}")
    out = None
    for name in parts:
        f = builders[name]()
        out = f if out is None else out + f
    return out


def assemble_elastic_stiffness(net, p, parts=("KE", "KB1", "KB2")):
    """3-component elastic operator ``KE + KB1 + KB2`` (unconstrained)."""
    return elastic_stiffness_forms(net, p, parts).matrix()


# ---------------------------------------------------------------------------
# norms


def _quadratic(A, v):
    v = np.asarray(v, dtype=float)
    if A.shape[1] != v.shape[0]:
        raise ValueError(f"dimension mismatch: operator {A.shape}, vector {v.shape}")
    return max(float(v @ (A @ v)), 0.0)


def norm_M(M, v):
    return math.sqrt(_quadratic(M, v))


def norm_K(K, v):
    return math.sqrt(_quadratic(K, v))


def norm_L(L, v):
    return math.sqrt(_quadratic(L, v))
