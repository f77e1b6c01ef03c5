"""Command line interface: ``netwave <command> ...``."""
import argparse
import csv
import logging
import math
from pathlib import Path
import sys
import time

import numpy as np
from dataclasses import replace

from netwave import experiments as ex
from netwave import io
from netwave.network import GeneratorConfig, NetworkError, assign_boundary, generate_fiber_network

BOUNDARY_CHOICES = ("x1", "x1=0", "all", "keep")


def _floats(text):
    return [_float(s) for s in text.split(",") if s.strip()]


def _float(text):
    text = text.strip()
    if text.startswith("2^"):
        return 2.0 ** float(text[2:])
    return float(text)


def _load(path, boundary="keep"):
    net = io.load_network(path)
    if boundary != "keep":
        net = assign_boundary(net, ex.BOUNDARY_PREDICATES[boundary]())
    return net


def _problem(args, net):
    exp = "elastic" if args.op == "elastic" else "scalar"
    cfg = ex.ExperimentConfig(exp, seed=args.seed, boundary="x1")
    return cfg, ex.build_problem(cfg, net)


# ---------------------------------------------------------------------------


def cmd_gen(args):
    cfg = GeneratorConfig(segment_length=args.r, total_length=args.total_length,
                          merge_tol_factor=args.merge_tol, seed=args.seed)
    net, stats = generate_fiber_network(cfg, return_stats=True)
    if args.boundary != "keep":
        net = assign_boundary(net, ex.BOUNDARY_PREDICATES[args.boundary]())
    io.write_network(net, args.out, binary=args.binary)
    print(f"nodes {net.n_nodes} edges {net.n_edges} boundary {len(net.boundary)} "
          f"length {net.total_length:.6f} placed {stats.placed_segments}")
    return 0


def cmd_validate(args):
    from netwave.network import validate_assumptions
    net = _load(args.inp)
    rep = validate_assumptions(net, _floats(args.R), sample_centers=args.samples, seed=args.seed)
    print("R,density_min,density_max,sigma,connected,passes")
    for i, R in enumerate(rep.R):
        print(f"{R:g},{rep.density_min[i]:.6g},{rep.density_max[i]:.6g},{rep.sigma[i]:.6g},"
              f"{int(all(rep.connectivity_ok[i]))},{int(rep.passes(R))}")
    print(f"# max_edge_length {rep.max_edge_length:.6g} boundary_gap {rep.boundary_gap:.6g} "
          f"R0_estimate {rep.R0_estimate:g}")
    return 0 if not math.isnan(rep.R0_estimate) else 1


def cmd_mesh(args):
    from netwave.coarse import build_interpolator, build_mesh
    net = _load(args.inp)
    mesh = build_mesh(net, _float(args.H))
    print(f"H {mesh.H:g} elements {mesh.n_elements} mesh_nodes {mesh.n_coarse_nodes} "
          f"free {len(mesh.free_coarse)}")
    if args.report:
        interp = build_interpolator(mesh, net)
        print("element,nodes,gram_condition")
        for e, (n, c) in enumerate(zip(mesh.element_counts(), interp.gram_condition)):
            print(f"{e},{n},{c:.6e}")
    return 0


def cmd_assemble(args):
    from netwave import linalg
    from netwave.operators import (assemble_graph_laplacian, assemble_mass, DofMap,
                                   ElasticParams, assemble_elastic_stiffness,
                                   assemble_scalar_stiffness, random_edge_coefficients)
    from netwave._rng import stream
    net = _load(args.inp)
    if args.op == "mass":
        A = assemble_mass(net, 3 if args.components == 3 else 1)
    elif args.op == "laplacian":
        A = assemble_graph_laplacian(net)
    elif args.op == "scalar":
        A = assemble_scalar_stiffness(net, random_edge_coefficients(net, stream(args.seed, "gamma")))
    else:
        A = assemble_elastic_stiffness(net, ElasticParams())
    if args.free:
        comps = A.shape[0] // net.n_nodes
        A = DofMap.for_network(net, comps).restrict_matrix(A)
    linalg.write_matrix_market(args.out, A)
    print(f"{args.op}: {A.shape[0]}x{A.shape[1]}, nnz {A.nnz}")
    return 0


def cmd_correctors(args):
    net = _load(args.inp)
    cfg, prob = _problem(args, net)
    cfg = replace(cfg, H=(_float(args.H),), k=args.k, method=args.method, workers=args.workers)
    basis, secs = ex.build_basis(cfg, prob, cfg.H[0])
    io.save_basis(args.out, basis, meta={"op": args.op, "seed": args.seed})
    corr = basis.correctors
    print(f"H {basis.H:g} k {basis.k} dim {basis.dim} factorizations {corr.factorizations} "
          f"max_constraint {corr.constraint_violation.max():.3e} seconds {secs:.2f}")
    if args.stats:
        with open(args.stats, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["element", "patch_unknowns", "constraint_violation", "residual"])
            for e in range(len(corr.patch_sizes)):
                w.writerow([e, corr.patch_sizes[e], f"{corr.constraint_violation[e]:.6e}",
                            f"{corr.residuals[e]:.6e}"])
    return 0


def cmd_eigen(args):
    from netwave.eigen import extreme_rayleigh, smallest_eigenpairs
    from netwave.operators import assemble_graph_laplacian
    net = _load(args.inp)
    cfg, prob = _problem(args, net)
    if args.which == "smallest":
        res = smallest_eigenpairs(prob.K, prob.M, args.count, tol=args.tol, seed=args.seed)
        print("index,eigenvalue,residual")
        for i, (lam, r) in enumerate(zip(res.eigenvalues, res.residuals), 1):
            print(f"{i},{lam:.15e},{r:.3e}")
    else:
        from scipy.sparse import kron, identity
        L = assemble_graph_laplacian(net)
        if prob.dofs.components > 1:
            L = kron(L, identity(prob.dofs.components), format="csr")
        L = prob.dofs.restrict_matrix(L)
        alpha, beta = extreme_rayleigh(prob.K, L, tol=args.tol, seed=args.seed)
        print("alpha,beta")
        print(f"{alpha:.15e},{beta:.15e}")
    return 0


def cmd_solve(args):
    from netwave.wave import (FineSpace, MultiscaleSpace, elastic_z_load, run, sine_ones,
                              zero_forcing)
    net = _load(args.inp)
    cfg, prob = _problem(args, net)
    n = prob.dofs.n_free
    forcing = {"zero": lambda: zero_forcing(n), "sin1": lambda: sine_ones(n),
               "zload": lambda: elastic_z_load(prob.net, prob.dofs)}[args.forcing]()
    if args.space == "fine":
        space = FineSpace(prob.K, prob.M)
    else:
        cfg = replace(cfg, H=(_float(args.H),), k=args.k)
        space = MultiscaleSpace(ex.build_basis(cfg, prob, cfg.H[0])[0])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    snap_steps = {int(round(t / args.tau)): t for t in _floats(args.snapshots)} if args.snapshots else {}

    def snapshot(k, a, b):
        # layer k+1 is available after the callback of pair (k, k+1)
        if k + 1 in snap_steps:
            full = prob.dofs.extend(space.to_fine(b))
            io.write_vector(out / f"u_{k + 1:06d}.txt", full, prob.dofs.components)

    z = np.zeros(space.size)
    res = run(space, args.T, args.tau, forcing, z, z, callback=snapshot)
    ex._write_csv(out / "energy.csv", ("step", "t", "kinetic", "potential", "total"),
                  ex._energy_rows(res.energy))
    final = prob.dofs.extend(space.to_fine(res.state.u_curr))
    io.write_vector(out / "final.txt", final, prob.dofs.components)
    print(f"{res.steps} steps in {res.seconds:.2f}s, final energy "
          f"{res.energy[-1, 2] + res.energy[-1, 3]:.6e}")
    return 0


def cmd_experiment(args):
    overrides = dict(seed=args.seed, total_length=args.total_length, workers=args.workers)
    if args.H:
        overrides["H"] = tuple(_floats(args.H))
    if args.config:
        cfg = ex.load_config(args.config, experiment=args.experiment, **overrides)
    else:
        cfg = ex.ExperimentConfig(args.experiment, **{k: v for k, v in overrides.items()
                                                      if v is not None})
    t0 = time.perf_counter()
    table = ex.run_experiment(cfg)
    ex.emit_outputs(table, args.out)
    sK, sM = table.slopes
    for r in sorted(table.rows, key=lambda r: -r.H):
        print(f"H {r.H:<8g} k {r.k} coarse {r.coarse_dofs:5d} error_K {r.error_K:.4e} "
              f"error_M {r.error_M:.4e}")
    print(f"slopes K {sK:.3f} M {sM:.3f} ({time.perf_counter() - t0:.1f}s)")
    if args.assert_slopes and not table.check_slopes():
        print("slope assertion failed", file=sys.stderr)
        return 2
    return 0


# ---------------------------------------------------------------------------


def build_parser():
    p = argparse.ArgumentParser(prog="netwave", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random fiber network")
    g.add_argument("--r", type=float, default=0.07)
    g.add_argument("--total-length", type=float, default=150.0)
    g.add_argument("--merge-tol", type=float, default=1e-3)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--boundary", choices=BOUNDARY_CHOICES, default="x1")
    g.add_argument("--binary", action="store_true")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    v = sub.add_parser("validate", help="check network homogeneity and connectivity")
    v.add_argument("--in", dest="inp", required=True)
    v.add_argument("--R", default="0.25,0.125")
    v.add_argument("--samples", type=int, default=16)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_validate)

    m = sub.add_parser("mesh", help="build the coarse mesh")
    m.add_argument("--in", dest="inp", required=True)
    m.add_argument("--H", required=True)
    m.add_argument("--report", action="store_true")
    m.set_defaults(func=cmd_mesh)

    a = sub.add_parser("assemble", help="write an operator in MatrixMarket format")
    a.add_argument("--in", dest="inp", required=True)
    a.add_argument("--op", choices=("mass", "laplacian", "scalar", "elastic"), default="scalar")
    a.add_argument("--components", type=int, default=1)
    a.add_argument("--free", action="store_true", help="eliminate Dirichlet unknowns")
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--out", required=True)
    a.set_defaults(func=cmd_assemble)

    for name, func, hlp in (("correctors", cmd_correctors, "compute the multiscale basis"),
                            ("eigen", cmd_eigen, "eigenvalues of the network operator"),
                            ("solve", cmd_solve, "run the wave solver")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("--in", dest="inp", required=True)
        s.add_argument("--op", choices=("scalar", "elastic"), default="scalar")
        s.add_argument("--seed", type=int, default=0)
        s.set_defaults(func=func)
        if name == "correctors":
            s.add_argument("--H", required=True)
            s.add_argument("--k", type=int, default=0)
            s.add_argument("--method", choices=("auto", "direct", "ldl", "cg"), default="auto")
            s.add_argument("--workers", type=int, default=1)
            s.add_argument("--out", required=True)
            s.add_argument("--stats")
        elif name == "eigen":
            s.add_argument("--which", choices=("smallest", "extreme"), default="smallest")
            s.add_argument("--count", type=int, default=6)
            s.add_argument("--tol", type=float, default=1e-10)
        else:
            s.add_argument("--space", choices=("fine", "ms"), default="ms")
            s.add_argument("--H", default="2^-3")
            s.add_argument("--k", type=int, default=0)
            s.add_argument("--T", type=float, default=2.0)
            s.add_argument("--tau", type=float, default=2e-3)
            s.add_argument("--forcing", choices=("zero", "sin1", "zload"), default="sin1")
            s.add_argument("--snapshots", help="comma separated output times")
            s.add_argument("--out", required=True)

    e = sub.add_parser("experiment", help="run a convergence study")
    e.add_argument("experiment", choices=("eigenmode", "scalar", "elastic"))
    e.add_argument("--config")
    e.add_argument("--out", required=True)
    e.add_argument("--seed", type=int)
    e.add_argument("--total-length", type=float)
    e.add_argument("--H", help="comma separated mesh sizes")
    e.add_argument("--workers", type=int)
    e.add_argument("--assert-slopes", action="store_true")
    e.set_defaults(func=cmd_experiment)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (NetworkError, ex.ConfigError, io.FormatError, ValueError) as exc:
        print(f"netwave: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
