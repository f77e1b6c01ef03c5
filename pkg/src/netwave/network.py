"""Spatial networks embedded in the unit hypercube.

A :class:`Network` is an undirected graph whose nodes carry coordinates in
``[0, 1]^d``.  Edge lengths are the Euclidean distances between endpoints.
The Dirichlet node set (``boundary``) is attached separately through
:func:`assign_boundary`.

The random fiber generator places straight segments in the unit square,
splits them at their crossings, merges nearly coincident nodes and prunes
dangling edges.
"""
from collections import defaultdict
from dataclasses import dataclass, field, replace
from functools import cached_property
import itertools
import math

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from netwave._rng import stream

BOUNDARY_TOL = 1e-12
# relative tolerance for collinear overlap detection between segments
COLLINEAR_EPS = 1e-12


class NetworkError(ValueError):
    """Raised for malformed or degenerate networks."""


def _empty_index():
    return np.zeros(0, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Network:
    """Embedded graph with an optional Dirichlet node set.

    ``nodes`` has shape ``(n, d)``, ``edges`` shape ``(e, 2)`` with each
    pair stored as ``(min, max)``, ``boundary`` is a sorted index array.
    """

    nodes: np.ndarray
    edges: np.ndarray
    boundary: np.ndarray = field(default_factory=_empty_index)

    def __post_init__(self):
        nodes = np.ascontiguousarray(self.nodes, dtype=np.float64)
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        boundary = np.unique(np.asarray(self.boundary, dtype=np.int64).ravel())
        if nodes.ndim != 2 or nodes.shape[0] == 0:
            raise NetworkError("network needs a non-empty (n, d) coordinate array")
        n = nodes.shape[0]
        if edges.size and (edges.min() < 0 or edges.max() >= n):
            raise NetworkError("edge references a node index out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise NetworkError("self-loop in edge list")
        edges = np.sort(edges, axis=1)
        if len(np.unique(edges, axis=0)) != len(edges):
            raise NetworkError("duplicate edge in edge list")
        if boundary.size and (boundary[0] < 0 or boundary[-1] >= n):
            raise NetworkError("boundary index out of range")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "boundary", boundary)
        if not self.is_connected():
            raise NetworkError("network graph is not connected")

    @property
    def dim(self):
        return self.nodes.shape[1]

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_edges(self):
        return self.edges.shape[0]

    @cached_property
    def edge_length(self):
        diff = self.nodes[self.edges[:, 0]] - self.nodes[self.edges[:, 1]]
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))

    @property
    def total_length(self):
        return float(self.edge_length.sum())

    @cached_property
    def degree(self):
        return np.bincount(self.edges.ravel(), minlength=self.n_nodes)

    def adjacency(self):
        """Symmetric 0/1 adjacency matrix in CSR form."""
        n = self.n_nodes
        i, j = self.edges[:, 0], self.edges[:, 1]
        data = np.ones(2 * len(i))
        return sp.csr_matrix((data, (np.r_[i, j], np.r_[j, i])), shape=(n, n))

    def is_connected(self):
        if self.n_nodes == 1:
            return True
        ncomp, _ = csgraph.connected_components(self.adjacency(), directed=False)
        return ncomp == 1

    def node_mass(self):
        """Half the summed length of the edges incident to each node."""
        m = np.zeros(self.n_nodes)
        np.add.at(m, self.edges[:, 0], 0.5 * self.edge_length)
        np.add.at(m, self.edges[:, 1], 0.5 * self.edge_length)
        return m

    @property
    def boundary_mask(self):
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.boundary] = True
        return mask

    @property
    def free_nodes(self):
        return np.flatnonzero(~self.boundary_mask)


def on_domain_boundary(coords, tol=BOUNDARY_TOL):
    """Mask of points lying on the boundary of the unit hypercube."""
    coords = np.asarray(coords)
    return np.any((coords <= tol) | (coords >= 1.0 - tol), axis=1)


def on_faces(axis, values=(0.0, 1.0), tol=BOUNDARY_TOL):
    """Predicate selecting nodes whose ``axis`` coordinate is one of ``values``."""

    def predicate(coords):
        c = np.asarray(coords)[:, axis]
        return np.any([np.abs(c - v) <= tol for v in values], axis=0)

    return predicate


def assign_boundary(net, predicate):
    """Return a copy of ``net`` with the Dirichlet set chosen by ``predicate``.

    ``predicate`` maps the ``(n, d)`` coordinate array to a boolean mask.
    """
    mask = np.asarray(predicate(net.nodes), dtype=bool)
    if mask.shape != (net.n_nodes,):
        raise NetworkError("boundary predicate must return one flag per node")
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise NetworkError("boundary predicate selected no nodes")
    return replace(net, boundary=idx)


# ---------------------------------------------------------------------------
# random fiber networks


@dataclass(frozen=True)
class GeneratorConfig:
    segment_length: float = 0.07
    total_length: float = 700.0
    merge_tol_factor: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if not self.segment_length > 0:
            raise ValueError("segment_length must be positive")
        if not self.total_length > 0:
            raise ValueError("total_length must be positive")
        if not 0 < self.merge_tol_factor < 1:
            raise ValueError("merge_tol_factor must lie in (0, 1)")


@dataclass(frozen=True)
class GenerationStats:
    placed_segments: int
    placed_length: float
    resampled: int
    intersections: int
    nodes_after_split: int
    nodes_after_merge: int
    retained_length: float


def _clip_unit_square(p, q):
    """Liang-Barsky clip of segment pq to the unit square, or None."""
    d = q - p
    t0, t1 = 0.0, 1.0
    for axis in range(2):
        for num, den in ((p[axis], -d[axis]), (1.0 - p[axis], d[axis])):
            # constraint: den * t <= num
            if den == 0.0:
                if num < 0.0:
                    return None
                continue
            t = num / den
            if den < 0.0:
                t0 = max(t0, t)
            else:
                t1 = min(t1, t)
    if t0 >= t1:
        return None
    a, b = p + t0 * d, p + t1 * d
    # clipped endpoints sit exactly on the square boundary
    for pt, t in ((a, t0), (b, t1)):
        if 0.0 < t < 1.0 or pt.min() < 0 or pt.max() > 1:
            np.clip(pt, 0.0, 1.0, out=pt)
            pt[np.abs(pt) <= BOUNDARY_TOL] = 0.0
            pt[np.abs(pt - 1.0) <= BOUNDARY_TOL] = 1.0
    return a, b


def _cross(u, v):
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _collinear_overlap(p, q, P, Q):
    """Flags for segments (P, Q) that overlap pq along a common line."""
    d = q - p
    D = Q - P
    ld = np.linalg.norm(d)
    lD = np.linalg.norm(D, axis=1)
    parallel = np.abs(_cross(d, D)) <= COLLINEAR_EPS * ld * lD
    on_line = np.abs(_cross(d, P - p)) <= COLLINEAR_EPS * ld * max(ld, 1.0)
    s0 = (P - p) @ d / ld**2
    s1 = (Q - p) @ d / ld**2
    lo, hi = np.minimum(s0, s1), np.maximum(s0, s1)
    overlap = (np.minimum(hi, 1.0) - np.maximum(lo, 0.0)) > COLLINEAR_EPS
    return parallel & on_line & overlap


class _SegmentGrid:
    def __init__(self, cell):
        self.cell = cell
        self.cells = defaultdict(list)

    def keys(self, p, q):
        lo = np.floor(np.minimum(p, q) / self.cell).astype(int)
        hi = np.floor(np.maximum(p, q) / self.cell).astype(int)
        return itertools.product(range(lo[0], hi[0] + 1), range(lo[1], hi[1] + 1))

    def candidates(self, p, q):
        out = set()
        for key in self.keys(p, q):
            out.update(self.cells.get(key, ()))
        return sorted(out)

    def add(self, idx, p, q):
        for key in self.keys(p, q):
            self.cells[key].append(idx)


def _place_segments(cfg):
    """Step 1: random placement, clipped to the unit square.

    Each placement draws one value from each of the streams ``position-x``,
    ``position-y`` and ``angle``; draws are buffered in blocks of 4096.
    """
    r = cfg.segment_length
    streams = [stream(cfg.seed, name) for name in ("position-x", "position-y", "angle")]
    block = 4096
    buf, pos = None, block

    P, Q = [], []
    grid = _SegmentGrid(r)
    placed = 0.0
    resampled = 0
    while placed < cfg.total_length:
        if pos == block:
            buf = np.stack([
                streams[0].uniform(-0.5 * r, 1 + 0.5 * r, block),
                streams[1].uniform(-0.5 * r, 1 + 0.5 * r, block),
                streams[2].uniform(0.0, math.pi, block),
            ], axis=1)
            pos = 0
        cx, cy, theta = buf[pos]
        pos += 1
        half = 0.5 * r * np.array([math.cos(theta), math.sin(theta)])
        mid = np.array([cx, cy])
        clipped = _clip_unit_square(mid - half, mid + half)
        if clipped is None:
            continue
        p, q = clipped
        length = float(np.linalg.norm(q - p))
        if length <= COLLINEAR_EPS:
            continue
        cand = grid.candidates(p, q)
        if cand and _collinear_overlap(p, q, np.array([P[i] for i in cand]),
                                       np.array([Q[i] for i in cand])).any():
            resampled += 1
            continue
        grid.add(len(P), p, q)
        P.append(p)
        Q.append(q)
        placed += length
    return np.array(P), np.array(Q), grid, placed, resampled


def _find_intersections(P, Q, grid):
    """Step 2a: pairwise crossings, returned as (i, j, t_i, t_j)."""
    pairs = set()
    for members in grid.cells.values():
        if len(members) > 1:
            pairs.update(itertools.combinations(sorted(members), 2))
    if not pairs:
        empty = np.zeros(0)
        return empty.astype(np.int64), empty.astype(np.int64), empty, empty
    ij = np.array(sorted(pairs), dtype=np.int64)
    i, j = ij[:, 0], ij[:, 1]
    p1, d1 = P[i], Q[i] - P[i]
    p2, d2 = P[j], Q[j] - P[j]
    o1 = _cross(d1, p2 - p1)
    o2 = _cross(d1, p2 + d2 - p1)
    o3 = _cross(d2, p1 - p2)
    o4 = _cross(d2, p1 + d1 - p2)
    den = _cross(d1, d2)
    scale = np.linalg.norm(d1, axis=1) * np.linalg.norm(d2, axis=1)
    hit = (o1 * o2 <= 0) & (o3 * o4 <= 0) & (np.abs(den) > COLLINEAR_EPS * scale)
    i, j, den = i[hit], j[hit], den[hit]
    w = (p2 - p1)[hit]
    ti = np.clip(_cross(w, d2[hit]) / den, 0.0, 1.0)
    tj = np.clip(_cross(w, d1[hit]) / den, 0.0, 1.0)
    return i, j, ti, tj


def _split_segments(P, Q, i, j, ti, tj):
    """Step 2b: nodes at endpoints and crossings, edges between neighbours."""
    S = len(P)
    k = len(i)
    coords = np.empty((2 * S + k, 2))
    coords[0:2 * S:2] = P
    coords[1:2 * S:2] = Q
    coords[2 * S:] = P[i] + ti[:, None] * (Q[i] - P[i])

    seg = np.r_[np.arange(S), np.arange(S), i, j]
    t = np.r_[np.zeros(S), np.ones(S), ti, tj]
    node = np.r_[2 * np.arange(S), 2 * np.arange(S) + 1, 2 * S + np.arange(k), 2 * S + np.arange(k)]
    order = np.lexsort((node, t, seg))
    seg, node = seg[order], node[order]
    same = seg[1:] == seg[:-1]
    edges = np.stack([node[:-1][same], node[1:][same]], axis=1)
    return coords, edges


def _canonical_edges(edges):
    edges = np.sort(edges, axis=1)
    edges = edges[edges[:, 0] != edges[:, 1]]
    return np.unique(edges, axis=0)


def _largest_component(coords, edges):
    n = len(coords)
    g = sp.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    _, labels = csgraph.connected_components(g, directed=False)
    # only nodes that carry edges count; ties go to the lowest label
    touched = np.zeros(n, dtype=bool)
    touched[edges.ravel()] = True
    counts = np.bincount(labels[touched], minlength=labels.max() + 1)
    keep = labels == np.argmax(counts)
    return _compact(coords, edges, keep)


def _compact(coords, edges, keep):
    new_index = -np.ones(len(coords), dtype=np.int64)
    new_index[keep] = np.arange(keep.sum())
    edges = new_index[edges]
    edges = edges[(edges >= 0).all(axis=1)]
    return coords[keep], edges


def _merge_close_nodes(coords, edges, radius):
    """Step 3: single-linkage merge of nodes closer than ``radius``.

    Surviving coordinates are cluster centroids, except that a cluster
    touching the domain boundary keeps the boundary coordinate on that axis.
    Repeats until no two nodes are closer than ``radius``.
    """
    radius = np.nextafter(radius, 0.0)
    while True:
        pairs = cKDTree(coords).query_pairs(radius, output_type="ndarray")
        if len(pairs) == 0:
            return coords, edges
        n = len(coords)
        g = sp.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        ncl, labels = csgraph.connected_components(g, directed=False)
        counts = np.bincount(labels, minlength=ncl)
        merged = np.zeros((ncl, coords.shape[1]))
        np.add.at(merged, labels, coords)
        merged /= counts[:, None]
        for value in (0.0, 1.0):
            hit = np.abs(coords - value) <= BOUNDARY_TOL
            for axis in range(coords.shape[1]):
                merged[labels[hit[:, axis]], axis] = value
        coords = merged
        edges = _canonical_edges(labels[edges])


def _prune_dangling(coords, edges):
    """Step 4: drop edges hanging off the bulk at a free (non-boundary) end."""
    fixed = on_domain_boundary(coords)
    alive = np.ones(len(edges), dtype=bool)
    while True:
        deg = np.bincount(edges[alive].ravel(), minlength=len(coords))
        leaf = (deg == 1) & ~fixed
        drop = alive & (leaf[edges[:, 0]] | leaf[edges[:, 1]])
        if not drop.any():
            break
        alive &= ~drop
    edges = edges[alive]
    keep = np.zeros(len(coords), dtype=bool)
    keep[edges.ravel()] = True
    return _compact(coords, edges, keep)


def prune_dangling(net):
    """Apply the dangling-edge pruning step to an existing network."""
    coords, edges = _prune_dangling(net.nodes, net.edges)
    if len(coords) == net.n_nodes:
        return net
    return Network(coords, edges)


def generate_fiber_network(cfg, return_stats=False):
    """Random straight-fiber network in the unit square.

    Segments of length ``cfg.segment_length`` get uniformly random midpoints
    in ``[-r/2, 1 + r/2]^2`` and uniformly random orientation and are clipped
    to the unit square, until the clipped lengths add up to
    ``cfg.total_length``.  Segments are split at their crossings, everything
    but the largest connected piece is dropped, nodes closer than
    ``merge_tol_factor * r`` are merged, and edges that dangle from the bulk
    without touching the square boundary are pruned repeatedly.
    """
    P, Q, grid, placed, resampled = _place_segments(cfg)
    i, j, ti, tj = _find_intersections(P, Q, grid)
    coords, edges = _split_segments(P, Q, i, j, ti, tj)
    edges = _canonical_edges(edges)
    n_split = len(coords)
    if len(edges) == 0:
        raise NetworkError("no edges were generated")
    coords, edges = _largest_component(coords, edges)
    coords, edges = _merge_close_nodes(coords, edges, cfg.merge_tol_factor * cfg.segment_length)
    n_merge = len(coords)
    coords, edges = _prune_dangling(coords, edges)
    if len(edges) == 0:
        raise NetworkError(
            "generated network is empty after pruning; increase total_length")
    net = Network(coords, edges)
    if not return_stats:
        return net
    stats = GenerationStats(
        placed_segments=len(P), placed_length=placed, resampled=resampled,
        intersections=len(i), nodes_after_split=n_split, nodes_after_merge=n_merge,
        retained_length=net.total_length)
    return net, stats


def path_network(points):
    """Chain network through ``points`` in order (handy for small examples)."""
    points = np.asarray(points, dtype=float)
    n = len(points)
    edges = np.stack([np.arange(n - 1), np.arange(1, n)], axis=1)
    return Network(points, edges)


def lattice_network(n, dim=2):
    """Regular ``n``-by-``n`` grid graph spanning the unit square."""
    if dim != 2:
        raise NotImplementedError("lattice_network only builds planar grids")
    x = np.linspace(0.0, 1.0, n)
    X, Y = np.meshgrid(x, x, indexing="xy")
    coords = np.stack([X.ravel(), Y.ravel()], axis=1)
    idx = np.arange(n * n).reshape(n, n)
    horiz = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
    vert = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
    return Network(coords, np.vstack([horiz, vert]))


# ---------------------------------------------------------------------------
# network quality diagnostics


@dataclass
class NetworkQualityReport:
    R: list
    density_min: list
    density_max: list
    sigma: list
    connectivity_ok: list  # one list of flags per R, one flag per center
    max_edge_length: float
    boundary_gap: float
    R0_estimate: float

    def passes(self, R):
        k = self.R.index(R)
        ok = self.density_min[k] > 0 and all(self.connectivity_ok[k])
        ok = ok and self.max_edge_length < R
        if not math.isnan(self.boundary_gap):
            ok = ok and self.boundary_gap < R
        return ok


def in_box(coords, center, R):
    """Membership in the half-open box of half-width R, closed on the domain boundary."""
    lo = center - R
    hi = center + R
    inside = (coords >= lo) & (coords < hi)
    closed_top = (coords == hi) & (hi >= 1.0)
    return np.all(inside | closed_top, axis=1)


def _box_connected(net, center, R, outer):
    inner_nodes = in_box(net.nodes, center, R)
    outer_nodes = in_box(net.nodes, center, outer)
    a, b = net.edges[:, 0], net.edges[:, 1]
    required = inner_nodes[a] | inner_nodes[b]
    if not required.any():
        return True
    allowed = outer_nodes[a] & outer_nodes[b]
    if np.any(required & ~allowed):
        return False
    e = net.edges[allowed]
    n = net.n_nodes
    g = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    _, labels = csgraph.connected_components(g, directed=False)
    ends = net.edges[required].ravel()
    return len(np.unique(labels[ends])) == 1


def _boundary_gap(net, samples_per_side=1001):
    if net.boundary.size == 0:
        return math.nan
    gamma = net.nodes[net.boundary]
    tree = cKDTree(gamma)
    gap = 0.0
    s = np.linspace(0.0, 1.0, samples_per_side)
    for axis in range(net.dim):
        for value in (0.0, 1.0):
            if not np.any(np.abs(gamma[:, axis] - value) <= BOUNDARY_TOL):
                continue
            pts = np.zeros((len(s), net.dim))
            pts[:, axis] = value
            other = [a for a in range(net.dim) if a != axis]
            if len(other) != 1:
                raise NotImplementedError("boundary gap is implemented for d = 2")
            pts[:, other[0]] = s
            gap = max(gap, float(tree.query(pts)[0].max()))
    return gap


def validate_assumptions(net, R_grid, sample_centers=16, seed=0):
    """Empirical check of the homogeneity, connectivity, locality and
    boundary density properties at each box radius in ``R_grid``.

    Box centres are drawn from the ``validate`` stream, uniformly in
    ``[R, 1 - R]^d`` so that boxes stay inside the domain.  Connectivity is
    tested with one extra layer: all edges touching ``B_R(x)`` must lie in
    one connected component of the edges inside ``B_{2R}(x)``.
    """
    mass = net.node_mass()
    d = net.dim
    rng = stream(seed, "validate")
    Rs = sorted(float(R) for R in R_grid)
    report = NetworkQualityReport(
        R=Rs, density_min=[], density_max=[], sigma=[], connectivity_ok=[],
        max_edge_length=float(net.edge_length.max()) if net.n_edges else 0.0,
        boundary_gap=_boundary_gap(net), R0_estimate=math.nan)
    for R in Rs:
        if R >= 0.5:
            centers = np.full((1, d), 0.5)
        else:
            centers = rng.uniform(R, 1.0 - R, size=(sample_centers, d))
        dens = np.array([mass[in_box(net.nodes, c, R)].sum() for c in centers]) / (2 * R) ** d
        report.density_min.append(float(dens.min()))
        report.density_max.append(float(dens.max()))
        report.sigma.append(float(dens.max() / dens.min()) if dens.min() > 0 else math.inf)
        report.connectivity_ok.append([_box_connected(net, c, R, 2 * R) for c in centers])
    for R in reversed(Rs):
        if not report.passes(R):
            break
        report.R0_estimate = R
    return report
