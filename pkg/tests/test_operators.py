import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from netwave._rng import stream
from netwave.network import Network, NetworkError, path_network
from netwave.operators import (DofMap, ElasticParams, assemble_elastic_stiffness,
                               assemble_graph_laplacian, assemble_mass,
                               assemble_scalar_stiffness, elastic_stiffness_forms, norm_K, norm_L,
                               norm_M, random_edge_coefficients, scalar_stiffness_forms)


def test_path_network_operators():
    net = path_network([[0.0, 0.0], [0.5, 0.0], [1.0, 0.0]])
    M = assemble_mass(net)
    np.testing.assert_allclose(M.diagonal(), [0.25, 0.5, 0.25])
    L = assemble_graph_laplacian(net)
    v = np.array([0.0, 1.0, 0.0])
    # (Lv, v) = 1/0.5 + 1/0.5
    assert norm_L(L, v) ** 2 == pytest.approx(4.0)
    np.testing.assert_allclose(L @ np.ones(3), 0.0, atol=1e-15)


def test_mass_identity(desk_net):
    M = assemble_mass(desk_net)
    one = np.ones(desk_net.n_nodes)
    assert norm_M(M, one) ** 2 == pytest.approx(desk_net.total_length, rel=1e-10)


def test_mass_vector_components(small_net):
    M3 = assemble_mass(small_net, 3)
    m = assemble_mass(small_net).diagonal()
    np.testing.assert_allclose(M3.diagonal(), np.repeat(m, 3))


def test_two_node_scalar_stiffness():
    h, g = 0.3, 0.7
    net = Network(np.array([[0.0, 0.0], [h, 0.0]]), [[0, 1]])
    K = assemble_scalar_stiffness(net, g).toarray()
    np.testing.assert_allclose(K, g / h * np.array([[1, -1], [-1, 1]]))


def test_stiffness_rejects_bad_gamma(small_net):
    with pytest.raises(ValueError):
        assemble_scalar_stiffness(small_net, 0.0)
    with pytest.raises(ValueError):
        assemble_scalar_stiffness(small_net, np.inf)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_scalar_bracketing_property(seed):
    from netwave.network import GeneratorConfig, generate_fiber_network
    net = generate_fiber_network(GeneratorConfig(total_length=40, seed=seed % 50))
    gamma = random_edge_coefficients(net, stream(seed, "gamma"))
    K = assemble_scalar_stiffness(net, gamma)
    L = assemble_graph_laplacian(net)
    v = np.random.default_rng(seed).standard_normal(net.n_nodes)
    k, l = norm_K(K, v) ** 2, norm_L(L, v) ** 2
    assert 0.1 * l - 1e-12 <= k <= 0.9 * l + 1e-12


def test_local_forms_sum_to_global(small_net):
    gamma = random_edge_coefficients(small_net, stream(0, "gamma"))
    forms = scalar_stiffness_forms(small_net, gamma)
    owners = forms.owner
    parts = [forms.matrix(owners % 3 == r) for r in range(3)]
    diff = abs(sum(parts) - forms.matrix()).max()
    assert diff <= 1e-12 * abs(forms.matrix()).max()


def test_operators_symmetric(small_net):
    K = assemble_elastic_stiffness(small_net, ElasticParams())
    assert abs(K - K.T).max() == 0.0
    L = assemble_graph_laplacian(small_net)
    assert abs(L - L.T).max() == 0.0


def test_elastic_translations_in_kernel(small_net):
    K = assemble_elastic_stiffness(small_net, ElasticParams())
    knorm = abs(K).max() * np.sqrt(K.shape[0])
    for c in range(3):
        t = np.zeros(K.shape[0])
        t[c::3] = 1.0
        assert np.linalg.norm(K @ t) <= 1e-8 * knorm * np.linalg.norm(t)


def test_elastic_parts_decouple(small_net):
    p = ElasticParams()
    KE = elastic_stiffness_forms(small_net, p, ("KE", "KB1")).matrix()
    KB2 = elastic_stiffness_forms(small_net, p, ("KB2",)).matrix()
    inplane = np.r_[0:KE.shape[0]:3, 1:KE.shape[0]:3]
    z = np.arange(2, KE.shape[0], 3)
    # tensile and in-plane bending never touch z, out-of-plane bending only touches z
    assert abs(KE[z][:, :]).max() == 0
    assert abs(KB2[inplane][:, :]).max() == 0


def test_elastic_gamma_ke():
    p = ElasticParams()
    assert p.gamma_ke == pytest.approx(210e9 * np.pi * 0.5e-3**2)
    assert p.second_moment == pytest.approx(0.25 * p.area * 0.5e-3**2)


def test_unordered_convention_halves_bending(small_net):
    o = elastic_stiffness_forms(small_net, ElasticParams(), ("KB1",)).matrix()
    u = elastic_stiffness_forms(small_net, ElasticParams(kb_pair_convention="unordered"),
                                ("KB1",)).matrix()
    assert abs(o - 2 * u).max() <= 1e-9 * abs(o).max()


def test_elastic_requires_planar():
    net = Network(np.array([[0, 0, 0], [1, 0, 0.0]]), [[0, 1]])
    with pytest.raises(ValueError):
        assemble_elastic_stiffness(net, ElasticParams())


def test_dofmap_restrict_extend(small_net):
    d = DofMap.for_network(small_net, 3)
    v = np.arange(d.n_free, dtype=float)
    full = d.extend(v)
    assert full.shape == (3 * small_net.n_nodes,)
    np.testing.assert_array_equal(d.restrict(full), v)
    assert np.all(d.node_field(full)[small_net.boundary] == 0)


def test_norm_dimension_mismatch(small_net):
    with pytest.raises(ValueError):
        norm_M(assemble_mass(small_net), np.ones(3))


def test_isolated_node_mass_rejected():
    net = Network(np.array([[0.0, 0.0]]), np.zeros((0, 2), int))
    with pytest.raises(NetworkError):
        assemble_mass(net)
