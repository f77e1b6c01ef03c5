"""Run one of the H-convergence studies and write its CSV/gnuplot files.

    python demos/convergence_study.py [eigenmode|scalar|elastic] [out_dir]

The eigenmode study takes well under a minute; the scalar one a minute or
two; the elastic one about ten minutes on a single core.
"""
import sys

from netwave.experiments import ExperimentConfig, emit_outputs, run_experiment

name = sys.argv[1] if len(sys.argv) > 1 else "eigenmode"
out = sys.argv[2] if len(sys.argv) > 2 else f"results_{name}"
table = run_experiment(ExperimentConfig(name))
emit_outputs(table, out)
print(f"{'H':>8} {'k':>2} {'coarse':>6} {'error_K':>11} {'error_M':>11}")
for r in sorted(table.rows, key=lambda r: -r.H):
    print(f"{r.H:8.4f} {r.k:2d} {r.coarse_dofs:6d} {r.error_K:11.4e} {r.error_M:11.4e}")
sK, sM = table.slopes
print(f"slopes: K {sK:.3f}, M {sM:.3f}; files in {out}/")
