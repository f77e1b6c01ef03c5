import math

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.integrate import quad

from netwave.coarse import build_interpolator, build_mesh, coarse_space
from netwave.eigen import smallest_eigenpairs
from netwave.lod import build_multiscale_basis
from netwave.wave import (FineSpace, Forcing, MultiscaleSpace, WaveState, energy, iterate,
                          num_steps, prepare_initial_data, run, sine_ones, step,
                          well_preparedness_constant, zero_forcing)


@pytest.fixture(scope="module")
def fine(small_problem):
    return FineSpace(small_problem.K, small_problem.M)


@pytest.fixture(scope="module")
def mode(small_problem):
    res = smallest_eigenpairs(small_problem.K, small_problem.M, 1)
    return res.eigenvalues[0], res.eigenvectors[:, 0]


def test_num_steps():
    assert num_steps(1.0, 0.1) == 10
    assert num_steps(1.05, 0.1) == 11
    with pytest.raises(ValueError):
        num_steps(0.0, 0.1)


def test_zero_data_stays_zero(fine):
    n = fine.size
    res = run(fine, 0.2, 0.01, zero_forcing(n), np.zeros(n), np.zeros(n))
    assert not np.any(res.state.u_curr)
    assert res.steps == 20


def test_energy_conserved_fine(fine):
    rng = np.random.default_rng(0)
    n = fine.size
    res = run(fine, 0.5, 0.01, zero_forcing(n), rng.standard_normal(n), rng.standard_normal(n))
    E = res.energy[:, 2] + res.energy[:, 3]
    assert np.abs(E - E[0]).max() <= 1e-10 * E[0]


def test_energy_conserved_multiscale(small_problem):
    mesh = build_mesh(small_problem.net, 0.25)
    space = coarse_space(mesh, build_interpolator(mesh, small_problem.net), small_problem.dofs)
    ms = MultiscaleSpace(build_multiscale_basis(space, small_problem.forms,
                                                small_problem.M_full, 1))
    rng = np.random.default_rng(1)
    res = run(ms, 1.0, 0.01, zero_forcing(small_problem.dofs.n_free),
              rng.standard_normal(ms.size), rng.standard_normal(ms.size))
    E = res.energy[:, 2] + res.energy[:, 3]
    assert np.abs(E - E[0]).max() <= 1e-10 * E[0]


def test_time_reversibility(fine):
    rng = np.random.default_rng(2)
    n = fine.size
    u0, u1 = rng.standard_normal(n), rng.standard_normal(n)
    tau = 0.02
    st = WaveState(u0, u1, 1, tau)
    for _ in range(30):
        st = step(st, fine.M, fine.K, 0.0)
    back = WaveState(st.u_curr, st.u_prev, 1, tau)
    for _ in range(30):
        back = step(back, fine.M, fine.K, 0.0)
    np.testing.assert_allclose(back.u_curr, u0, atol=1e-9 * np.abs(u0).max())


def test_three_dof_closed_form():
    # generalized eigenmodes evolve as 2 cos(theta) recursions
    M = sp.diags([1.0, 2.0, 0.5])
    A = np.array([[3.0, -1.0, 0.0], [-1.0, 4.0, -2.0], [0.0, -2.0, 5.0]])
    K = sp.csr_matrix(A)
    tau = 0.1
    lam, W = sla.eigh(A, M.toarray())
    theta = np.arccos((1 - lam * tau**2 / 4) / (1 + lam * tau**2 / 4))
    rng = np.random.default_rng(3)
    a, b = rng.standard_normal(3), rng.standard_normal(3)

    def exact(n):
        return W @ (a * np.cos(n * theta) + b * np.sin(n * theta))

    space = FineSpace(K, M)
    last = None
    for n, _, u_next in iterate(space, 50 * tau, tau, zero_forcing(3), exact(0), exact(1)):
        last = (n, u_next)
    assert last[0] == 49
    np.testing.assert_allclose(last[1], exact(50), rtol=1e-11, atol=1e-11)


def test_temporal_order(fine, mode):
    lam, w = mode
    n = fine.size
    T = 1.0
    errs = []
    taus = [0.04, 0.02, 0.01, 0.005]
    for tau in taus:
        u0, u1 = prepare_initial_data(w, np.zeros(n), zero_forcing(n), tau, fine)
        res = run(fine, T, tau, zero_forcing(n), u0, u1, record_energy=False)
        ref = math.cos(math.sqrt(lam) * T) * w
        d = res.state.u_curr - ref
        errs.append(math.sqrt(d @ (fine.M @ d)))
    slopes = np.diff(np.log(errs)) / np.diff(np.log(taus))
    assert np.all(slopes >= 1.9)


def test_prepare_initial_data_fine(fine, mode):
    lam, w = mode
    n = fine.size
    tau = 0.01
    u0, u1 = prepare_initial_data(w, np.zeros(n), zero_forcing(n), tau, fine)
    np.testing.assert_allclose(u0, w)
    np.testing.assert_allclose(u1, (1 - 0.5 * lam * tau**2) * w, rtol=1e-9, atol=1e-12)
    z0, z1 = prepare_initial_data(np.zeros(n), np.zeros(n), zero_forcing(n), tau, fine)
    assert not np.any(z0) and not np.any(z1)


def test_forcing_derivatives():
    f = sine_ones(2, frequency=1.0)
    t, h = 0.3, 1e-5
    for j in range(3):
        fd = (f.derivative(t + h, j) - f.derivative(t - h, j)) / (2 * h)
        np.testing.assert_allclose(f.derivative(t, j + 1), fd, rtol=1e-7)
    limited = Forcing(np.ones(2), lambda t, j: t, "ramp", max_order=1)
    with pytest.raises(ValueError, match="up to order 1"):
        limited.derivative(0.0, 2)
    assert zero_forcing(3).is_zero and not f.is_zero


def test_energy_helper():
    M = sp.identity(2)
    K = sp.diags([2.0, 2.0])
    kin, pot = energy(M, K, np.array([0.0, 0.0]), np.array([1.0, 0.0]), 0.5)
    assert kin == pytest.approx(4.0) and pot == pytest.approx(0.5)


def test_well_preparedness_zero(small_problem):
    n = small_problem.dofs.n_free
    rep = well_preparedness_constant(np.zeros(n), np.zeros(n), zero_forcing(n), 3,
                                     small_problem.M, small_problem.K, 1.0)
    assert rep.constant == 0.0


def test_well_preparedness_eigenmode(small_problem, mode):
    lam, w = mode
    n = small_problem.dofs.n_free
    rep = well_preparedness_constant(w, np.zeros(n), zero_forcing(n), 2,
                                     small_problem.M, small_problem.K, 1.0)
    # w_2 = -lam w, w_3 = 0
    np.testing.assert_allclose(rep.k_norms, [math.sqrt(lam), 0.0, lam * math.sqrt(lam)],
                               rtol=1e-8, atol=1e-10)
    assert rep.last_m_norm == pytest.approx(0.0, abs=1e-10)
    assert rep.constant == pytest.approx(math.sqrt(lam) + lam**1.5, rel=1e-8)


def test_well_preparedness_forcing_norms(small_problem):
    n = small_problem.dofs.n_free
    f = sine_ones(n)
    T = 1.3
    rep = well_preparedness_constant(np.zeros(n), np.zeros(n), f, 2,
                                     small_problem.M, small_problem.K, T, tau_q=1e-4)
    one = math.sqrt(small_problem.M.diagonal().sum())
    om = 2 * math.pi
    for j in range(3):
        ref, _ = quad(lambda t: abs(om**j * math.sin(om * t + 0.5 * j * math.pi)), 0, T,
                      limit=200)
        assert rep.forcing_norms[j] == pytest.approx(ref * one, rel=1e-5)
    with pytest.raises(ValueError):
        well_preparedness_constant(np.zeros(n), np.zeros(n), f, -1,
                                   small_problem.M, small_problem.K, T)
