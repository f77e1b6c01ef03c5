import numpy as np
import pytest

from netwave._rng import stream
from netwave.network import (GeneratorConfig, assign_boundary, generate_fiber_network,
                             lattice_network, on_faces)
from netwave.operators import (DofMap, assemble_mass, random_edge_coefficients,
                               scalar_stiffness_forms)


@pytest.fixture(scope="session")
def small_net():
    # ~3k nodes, every H = 1/8 element populated, still fine for dense oracles
    net = generate_fiber_network(GeneratorConfig(total_length=100, seed=1))
    return assign_boundary(net, on_faces(0))


@pytest.fixture(scope="session")
def desk_net():
    net = generate_fiber_network(GeneratorConfig(total_length=150, seed=3))
    return assign_boundary(net, on_faces(0))


@pytest.fixture(scope="session")
def lattice():
    return assign_boundary(lattice_network(17), on_faces(0))


class ScalarProblem:
    def __init__(self, net, seed=3):
        self.net = net
        self.gamma = random_edge_coefficients(net, stream(seed, "gamma"))
        self.forms = scalar_stiffness_forms(net, self.gamma)
        self.M_full = assemble_mass(net)
        self.dofs = DofMap.for_network(net, 1)
        self.K = self.dofs.restrict_matrix(self.forms.matrix())
        self.M = self.dofs.restrict_matrix(self.M_full)


@pytest.fixture(scope="session")
def small_problem(small_net):
    return ScalarProblem(small_net, seed=1)


@pytest.fixture(scope="session")
def desk_problem(desk_net):
    return ScalarProblem(desk_net)


def rng(seed=0):
    return np.random.default_rng(seed)
