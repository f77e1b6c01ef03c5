"""Energy-conserving time stepping for ``M u'' + K u = M f``.

The scheme is the implicit average

    (M + tau^2/4 K) u^{n+1} = tau^2 M f^n + (2M - tau^2/2 K) u^n
                              - (M + tau^2/4 K) u^{n-1},

which is unconditionally stable and conserves

    E^{n+1/2} = |(u^{n+1} - u^n)/tau|_M^2 + |(u^{n+1} + u^n)/2|_K^2

exactly when ``f = 0``.  The same code runs in the fine space (unknowns on
the free network DOFs) and in a multiscale space (coefficients in a
corrected basis).
"""
from dataclasses import dataclass, field
import math
import time
from typing import Callable, Optional

import numpy as np
from scipy.integrate import trapezoid
import scipy.sparse as sp

from netwave import linalg


# ---------------------------------------------------------------------------
# forcing


@dataclass(frozen=True, eq=False)
class Forcing:
    """Separable forcing ``f(x, t) = s(t) F(x)``.

    ``profile`` holds ``F`` on the free fine DOFs, ``temporal(t, j)`` the
    j-th time derivative of ``s``.  ``max_order`` bounds the derivatives the
    temporal factor can provide (``None`` means unlimited).
    """

    profile: np.ndarray
    temporal: Callable
    name: str = "custom"
    max_order: Optional[int] = None

    def __call__(self, t):
        return self.derivative(t, 0)

    def derivative(self, t, order):
        if self.max_order is not None and order > self.max_order:
            raise ValueError(f"forcing {self.name!r} provides derivatives up to order "
                             f"{self.max_order}, {order} requested")
        s = self.temporal(t, order)
        return s * self.profile

    @property
    def is_zero(self):
        return not np.any(self.profile)


def _sine(omega, amplitude=1.0):
    def s(t, j):
        return amplitude * omega**j * math.sin(omega * t + 0.5 * j * math.pi)
    return s


def zero_forcing(n):
    return Forcing(np.zeros(n), lambda t, j: 0.0, "zero")


def sine_ones(n, frequency=1.0):
    """``sin(2 pi frequency t)`` times the constant one function."""
    return Forcing(np.ones(n), _sine(2 * math.pi * frequency), "sin1")


def elastic_z_load(net, dofs, amplitude=1e5, omega=0.4 * math.pi):
    """``amplitude * x_1^2 sin(omega t)`` in the out-of-plane component."""
    if dofs.components != 3:
        raise ValueError("the z load needs three displacement components")
    full = np.zeros(dofs.n_full)
    full[2::3] = net.nodes[:, 0] ** 2
    return Forcing(dofs.restrict(full), _sine(omega, amplitude), "zload")


# ---------------------------------------------------------------------------
# spaces


class FineSpace:
    """Free network DOFs with operators ``K`` and diagonal ``M``."""

    kind = "fine"

    def __init__(self, K, M):
        self.K = sp.csr_matrix(K)
        self.M = sp.csr_matrix(M)
        self.m_diag = self.M.diagonal()
        if np.any(self.m_diag <= 0):
            raise ValueError("the mass matrix must have a positive diagonal")

    @property
    def size(self):
        return self.K.shape[0]

    def load(self, f):
        return self.M @ f

    def to_fine(self, u):
        return u

    def project(self, v):
        return np.asarray(v, dtype=float)


class MultiscaleSpace:
    """Coefficients in the corrected basis of a :class:`MultiscaleBasis`."""

    kind = "multiscale"

    def __init__(self, basis):
        from netwave.lod import ritz_project
        self.basis = basis
        self.K = basis.K_ms
        self.M = basis.M_ms
        self.m_diag = basis.M.diagonal()
        self._ritz = ritz_project

    @property
    def size(self):
        return self.K.shape[0]

    def load(self, f):
        return self.basis.B.T @ (self.basis.M @ f)

    def to_fine(self, c):
        return self.basis.B @ c

    def project(self, v):
        return self._ritz(self.basis, v)


# factorizations of M + tau^2/4 K keyed by operator identity and tau
_FACTOR_CACHE = {}
_CACHE_LIMIT = 8


def step_factorization(M, K, tau):
    key = (id(M), id(K), float(tau))
    hit = _FACTOR_CACHE.get(key)
    if hit is not None and hit[0] is M and hit[1] is K:
        return hit[2]
    A = M + (0.25 * tau**2) * K
    F = linalg.cholesky(A)
    if len(_FACTOR_CACHE) >= _CACHE_LIMIT:
        _FACTOR_CACHE.pop(next(iter(_FACTOR_CACHE)))
    _FACTOR_CACHE[key] = (M, K, F)
    return F


@dataclass
class WaveState:
    u_prev: np.ndarray
    u_curr: np.ndarray
    n: int
    tau: float
    energy: list = field(default_factory=list)

    @property
    def t(self):
        return self.n * self.tau


def energy(M, K, u_prev, u_next, tau):
    """Kinetic and potential parts of the discrete energy between two layers."""
    v = (u_next - u_prev) / tau
    w = 0.5 * (u_next + u_prev)
    return float(v @ (M @ v)), float(w @ (K @ w))


def step(state, M, K, load_n, F=None):
    """Advance one step; ``load_n`` is ``M f^n`` in the space's coordinates."""
    if state.n < 1:
        raise ValueError("stepping needs the two initial layers u^0 and u^1")
    tau = state.tau
    F = F or step_factorization(M, K, tau)
    u, up = state.u_curr, state.u_prev
    a = 0.25 * tau**2
    rhs = tau**2 * load_n + 2.0 * (M @ u) - 2.0 * a * (K @ u) - (M @ up) - a * (K @ up)
    u_next = F.solve(rhs)
    return WaveState(u, u_next, state.n + 1, tau, state.energy)


def prepare_initial_data(g, h, forcing, tau, space):
    """Layers ``u^0`` and ``u^1`` for the given space.

    In the fine space ``u^1`` is the second-order Taylor expansion using
    ``D_t^2 u(0) = f(0) - M^-1 K g``.  In a multiscale space both layers are
    the Ritz projections of the fine ones.
    """
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    fine = space.basis if space.kind == "multiscale" else space
    K = fine.K
    m = space.m_diag
    acc = forcing(0.0) - (K @ g) / m
    u1 = g + tau * h + 0.5 * tau**2 * acc
    return space.project(g), space.project(u1)


@dataclass
class RunResult:
    state: WaveState
    energy: np.ndarray   # rows (n, t_{n+1/2}, kinetic, potential)
    steps: int
    seconds: float


def num_steps(T, tau):
    """Smallest ``N`` with ``N tau >= T`` (up to rounding noise)."""
    if not (T > 0 and tau > 0):
        raise ValueError("T and tau must be positive")
    return max(int(math.ceil(T / tau - 1e-9)), 1)


def iterate(space, T, tau, forcing, u0, u1):
    """Yield ``(n, u^n, u^{n+1})`` for ``n = 0 .. N-1``.

    Generators of several spaces can be advanced in lockstep, which is how
    reference solutions are compared without storing trajectories.
    """
    N = num_steps(T, tau)
    M, K = space.M, space.K
    F = step_factorization(M, K, tau)
    state = WaveState(np.asarray(u0, float), np.asarray(u1, float), 1, tau)
    yield 0, state.u_prev, state.u_curr
    zero = forcing.is_zero
    for n in range(1, N):
        load = 0.0 if zero else space.load(forcing(n * tau))
        state = step(state, M, K, load, F)
        yield n, state.u_prev, state.u_curr


def run(space, T, tau, forcing, u0, u1, callback=None, record_energy=True):
    """Run ``N = ceil(T / tau)`` steps from layers ``u0``, ``u1``.

    ``callback(n, u_n, u_{n+1})`` is called for every consecutive pair of
    layers, starting with ``(0, u0, u1)``.
    """
    t0 = time.perf_counter()
    rows = []
    a = b = None
    for n, a, b in iterate(space, T, tau, forcing, u0, u1):
        if record_energy:
            kin, pot = energy(space.M, space.K, a, b, tau)
            rows.append((n, (n + 0.5) * tau, kin, pot))
        if callback is not None:
            callback(n, a, b)
    E = np.array(rows, dtype=float).reshape(-1, 4)
    N = num_steps(T, tau)
    return RunResult(WaveState(a, b, N, tau), E, N, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# well-preparedness


@dataclass(frozen=True, eq=False)
class WellPreparednessReport:
    m: int
    w: list                # w_0 ... w_{m+1}
    forcing_norms: np.ndarray   # ||D^j f||_{L1(0,T; M)}, j = 0..m
    k_norms: np.ndarray         # |w_j|_K, j = 0..m
    last_m_norm: float          # |w_{m+1}|_M
    constant: float


def well_preparedness_constant(g, h, forcing, m, M, K, T, tau_q=1e-3):
    """Compatibility constant of order ``m``.

    ``w_0 = g``, ``w_1 = h``, ``w_j = D^{j-2} f(0) - M^-1 K w_{j-2}``; the
    forcing norms are integrated with the composite trapezoid rule on a grid
    of width at most ``tau_q``.
    """
    if m < 0:
        raise ValueError("order m must be non-negative")
    mdiag = M.diagonal() if sp.issparse(M) else np.diag(M)
    w = [np.asarray(g, dtype=float), np.asarray(h, dtype=float)]
    for j in range(2, m + 2):
        w.append(forcing.derivative(0.0, j - 2) - (K @ w[j - 2]) / mdiag)
    w = w[:m + 2]
    nq = max(int(math.ceil(T / tau_q)), 1)
    ts = np.linspace(0.0, T, nq + 1)
    fnorms = np.zeros(m + 1)
    if not forcing.is_zero:
        for j in range(m + 1):
            vals = np.array([math.sqrt(max(float(v @ (mdiag * v)), 0.0))
                             for v in (forcing.derivative(t, j) for t in ts)])
            fnorms[j] = trapezoid(vals, ts)
    knorms = np.array([math.sqrt(max(float(v @ (K @ v)), 0.0)) for v in w[:m + 1]])
    last = math.sqrt(max(float(w[m + 1] @ (mdiag * w[m + 1])), 0.0))
    C = float(fnorms.sum() + knorms.sum() + last)
    return WellPreparednessReport(m, w, fnorms, knorms, last, C)
