"""Generate a fiber network, check its homogeneity and look at the
spectral bracketing of the scalar operator against the graph Laplacian.

    python demos/network_and_operators.py [total_length] [seed]
"""
import sys

from netwave._rng import stream
from netwave.eigen import extreme_rayleigh
from netwave.network import (GeneratorConfig, assign_boundary, generate_fiber_network,
                             on_faces, validate_assumptions)
from netwave.operators import (DofMap, assemble_graph_laplacian, assemble_mass,
                               assemble_scalar_stiffness, random_edge_coefficients)

length = float(sys.argv[1]) if len(sys.argv) > 1 else 100.0
seed = int(sys.argv[2]) if len(sys.argv) > 2 else 3

net = generate_fiber_network(GeneratorConfig(total_length=length, seed=seed))
net = assign_boundary(net, on_faces(0))
print(f"{net.n_nodes} nodes, {net.n_edges} edges, {len(net.boundary)} Dirichlet nodes")
print(f"|1|_M^2 = {assemble_mass(net).diagonal().sum():.12f}, length {net.total_length:.12f}")

rep = validate_assumptions(net, [0.5, 0.25, 0.125], sample_centers=8)
for R, lo, hi, s in zip(rep.R, rep.density_min, rep.density_max, rep.sigma):
    print(f"R = {R:<6g} density in [{lo:7.2f}, {hi:7.2f}]  sigma {s:.3f}")

gamma = random_edge_coefficients(net, stream(seed, "gamma"))
dofs = DofMap.for_network(net, 1)
K = dofs.restrict_matrix(assemble_scalar_stiffness(net, gamma))
L = dofs.restrict_matrix(assemble_graph_laplacian(net))
alpha, beta = extreme_rayleigh(K, L)
print(f"gamma in [{gamma.min():.4f}, {gamma.max():.4f}]; (Kv,v)/(Lv,v) in [{alpha:.4f}, {beta:.4f}]")
