"""Decay of the localization error |(Q - Q_k) phi|_K with the patch size k
for one interior coarse basis function.

    python demos/corrector_decay.py [H]
"""
import math
import sys

import numpy as np

from netwave.coarse import build_interpolator, build_mesh, coarse_space
from netwave.experiments import ExperimentConfig, build_problem
from netwave.lod import compute_correctors, compute_global_correctors

H = float(sys.argv[1]) if len(sys.argv) > 1 else 0.125
cfg = ExperimentConfig("eigenmode")
prob = build_problem(cfg)
mesh = build_mesh(prob.net, H)
space = coarse_space(mesh, build_interpolator(mesh, prob.net), prob.dofs)

mid = mesh.n_per_axis // 2
col = int(np.searchsorted(mesh.free_coarse, mesh.node_id(np.array([mid, mid]))))
q = compute_global_correctors(space, prob.K).Q[:, col].toarray().ravel()
prev = None
for k in range(1, 6):
    d = q - compute_correctors(space, prob.forms, k).Q[:, col].toarray().ravel()
    e = math.sqrt(max(d @ (prob.K @ d), 0.0))
    ratio = f"  ratio {prev / e:8.2f}" if prev and e > 0 else ""
    print(f"k = {k}: |(Q - Q_k) phi|_K = {e:.3e}{ratio}")
    prev = e
