"""Multiscale (localized orthogonal decomposition) solvers for wave
equations on spatial networks."""

__version__ = "0.1.0"

from netwave.network import (Network, NetworkError, GeneratorConfig, generate_fiber_network,
                             assign_boundary, on_domain_boundary, on_faces,
                             validate_assumptions)
from netwave.operators import (DofMap, ElasticParams, LocalForms, assemble_mass,
                               assemble_graph_laplacian, assemble_scalar_stiffness,
                               assemble_elastic_stiffness, norm_K, norm_L, norm_M)
from netwave.coarse import (CoarseMesh, Interpolator, Patch, build_mesh, build_interpolator,
                            build_patch, coarse_space, prolong)
from netwave.lod import (CorrectorSet, MultiscaleBasis, build_ideal_basis,
                         build_multiscale_basis, compute_element_corrector, ritz_project)
from netwave.eigen import EigenResult, extreme_rayleigh, smallest_eigenpairs
from netwave.wave import (FineSpace, Forcing, MultiscaleSpace, WaveState,
                          prepare_initial_data, run, step, well_preparedness_constant)
