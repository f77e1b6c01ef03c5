"""Convergence studies in H for the three wave problems.

* ``eigenmode``: scalar operator, exact solution ``cos(sqrt(lambda) t) w``
  built from the sixth eigenpair.
* ``scalar_inhomogeneous``: scalar operator with load ``sin(2 pi t) * 1``,
  compared against a fine reference run with the same time step.
* ``elastic``: beam-network elasticity with an out-of-plane load, also
  compared against a fine reference.

Multiscale runs for all mesh sizes advance in lockstep with the reference
so that no trajectory is stored.
"""
from dataclasses import dataclass, field, fields, replace
import json
import logging
import math
from pathlib import Path
import time
import warnings

import numpy as np
from threadpoolctl import threadpool_limits

from netwave import __version__
from netwave._rng import stream
from netwave.coarse import build_interpolator, build_mesh, coarse_space
from netwave.eigen import smallest_eigenpairs
from netwave.io import load_network
from netwave.lod import build_multiscale_basis
from netwave.network import (GeneratorConfig, assign_boundary, generate_fiber_network,
                             on_domain_boundary, on_faces)
from netwave.operators import (DofMap, ElasticParams, assemble_mass,
                               elastic_stiffness_forms, random_edge_coefficients,
                               scalar_stiffness_forms)
from netwave.wave import (FineSpace, MultiscaleSpace, elastic_z_load, iterate, num_steps,
                          prepare_initial_data, sine_ones, zero_forcing)

log = logging.getLogger(__name__)

EXPERIMENTS = ("eigenmode", "scalar_inhomogeneous", "elastic")
ALIASES = {"scalar": "scalar_inhomogeneous", "eigen": "eigenmode"}

# per-experiment defaults: generated fiber length, time step, final time
# (None: half an eigen-period), Dirichlet set.  The scalar load needs the
# denser network to leave the pre-asymptotic range at H = 1/4.
DEFAULTS = {
    "eigenmode": dict(total_length=150.0, tau=1e-3, T=None, boundary="x1"),
    "scalar_inhomogeneous": dict(total_length=300.0, tau=2e-3, T=2.0, boundary="all"),
    "elastic": dict(total_length=150.0, tau=1e-2, T=10.0, boundary="x1=0"),
}

BOUNDARY_PREDICATES = {
    "x1": lambda: on_faces(0, (0.0, 1.0)),
    "x1=0": lambda: on_faces(0, (0.0,)),
    "all": lambda: on_domain_boundary,
}

FLOAT_FMT = "{:.12e}"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int = 3
    total_length: float = 0.0   # 0 selects the experiment default
    segment_length: float = 0.07
    merge_tol_factor: float = 1e-3
    network_file: str = ""
    H: tuple = (0.25, 0.125, 0.0625)
    k: int = 0               # 0 selects k = log2(1/H)
    tau: float = 0.0         # 0 selects the experiment default
    T: float = 0.0
    boundary: str = ""
    gamma_low: float = 0.1
    gamma_high: float = 0.9
    youngs_modulus: float = 210e9
    wire_radius: float = 0.5e-3
    kb_pair_convention: str = "ordered"
    eigen_index: int = 6
    forcing_scale: float = 1.0
    method: str = "auto"
    workers: int = 1

    def __post_init__(self):
        exp = ALIASES.get(self.experiment, self.experiment)
        if exp not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        object.__setattr__(self, "experiment", exp)
        H = tuple(float(h) for h in np.atleast_1d(self.H))
        for h in H:
            lvl = -math.log2(h)
            if lvl < 1 or abs(lvl - round(lvl)) > 1e-12:
                raise ConfigError(f"H values must be powers of two below 1, got {h}")
        object.__setattr__(self, "H", tuple(sorted(H, reverse=True)))
        if self.k < 0:
            raise ConfigError("k must be >= 1 (or 0 for the log2(1/H) rule)")
        d = DEFAULTS[exp]
        if not self.total_length:
            object.__setattr__(self, "total_length", d["total_length"])
        if not self.tau:
            object.__setattr__(self, "tau", d["tau"])
        if not self.T and d["T"] is not None:
            object.__setattr__(self, "T", d["T"])
        if not self.boundary:
            object.__setattr__(self, "boundary", d["boundary"])
        if self.boundary not in BOUNDARY_PREDICATES:
            raise ConfigError(f"unknown boundary {self.boundary!r}")
        if self.tau <= 0 or self.T < 0 or self.total_length <= 0:
            raise ConfigError("tau and total_length must be positive, T non-negative")

    def k_for(self, H):
        return self.k if self.k else int(round(math.log2(1.0 / H)))

    def as_dict(self):
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out


def _convert(name, raw, ftype):
    raw = raw.strip().strip('"').strip("'")
    try:
        if name == "H":
            items = raw.strip("[]()").replace(";", ",").split(",")
            return tuple(_parse_float(s) for s in items if s.strip())
        if ftype in (int, "int"):
            return int(raw)
        if ftype in (float, "float"):
            return _parse_float(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc
    return raw


def _parse_float(s):
    s = s.strip()
    if s.startswith("2^"):
        return 2.0 ** float(s[2:])
    return float(s)


def parse_config(text, **overrides):
    """Parse a flat ``key = value`` file (``#`` comments, optional quotes)."""
    types = {f.name: f.type for f in fields(ExperimentConfig)}
    vals = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        vals[key] = _convert(key, raw, types[key])
    vals.update({k: v for k, v in overrides.items() if v is not None})
    if "experiment" not in vals:
        raise ConfigError("config must name the experiment")
    return ExperimentConfig(**vals)


def load_config(path, **overrides):
    return parse_config(Path(path).read_text(), **overrides)


# ---------------------------------------------------------------------------
# results


@dataclass
class ConvergenceRow:
    H: float
    k: int
    coarse_dofs: int
    fine_dofs: int
    error_K: float
    error_M: float
    setup_seconds: float = 0.0
    step_seconds: float = 0.0


def fit_slope(H, err):
    """Least-squares slope of log2(err) against log2(H)."""
    H = np.asarray(H, dtype=float)
    err = np.asarray(err, dtype=float)
    if len(H) < 2:
        raise ValueError("need at least two points for a slope")
    if np.any(err <= 0):
        return float("nan")
    return float(np.polyfit(np.log2(H), np.log2(err), 1)[0])


@dataclass
class ConvergenceTable:
    experiment: str
    rows: list
    energy: dict = field(default_factory=dict)  # H -> array (n, t, kinetic, potential)
    meta: dict = field(default_factory=dict)

    @property
    def slopes(self):
        """(K slope, M slope); NaN when fewer than two mesh sizes were run."""
        if len(self.rows) < 2:
            return float("nan"), float("nan")
        H = [r.H for r in self.rows]
        return (fit_slope(H, [r.error_K for r in self.rows]),
                fit_slope(H, [r.error_M for r in self.rows]))

    def monotone(self):
        rows = sorted(self.rows, key=lambda r: -r.H)
        ok = all(b.error_K <= a.error_K and b.error_M <= a.error_M
                 for a, b in zip(rows, rows[1:]))
        if not ok:
            warnings.warn(f"{self.experiment}: errors do not decrease monotonically in H")
        return ok

    def check_slopes(self, k_min=0.9, m_min=1.8):
        sK, sM = self.slopes
        return sK >= k_min and sM >= m_min


# ---------------------------------------------------------------------------
# setup


def build_network(cfg):
    if cfg.network_file:
        net = load_network(cfg.network_file)
    else:
        net = generate_fiber_network(GeneratorConfig(
            segment_length=cfg.segment_length, total_length=cfg.total_length,
            merge_tol_factor=cfg.merge_tol_factor, seed=cfg.seed))
    return assign_boundary(net, BOUNDARY_PREDICATES[cfg.boundary]())


@dataclass
class Problem:
    net: object
    dofs: DofMap
    forms: object
    M_full: object
    K: object
    M: object


def build_problem(cfg, net=None):
    net = build_network(cfg) if net is None else net
    if cfg.experiment == "elastic":
        if len(net.boundary) < 3:
            raise ConfigError("the elastic problem needs at least three Dirichlet nodes")
        p = ElasticParams(cfg.youngs_modulus, cfg.wire_radius, cfg.kb_pair_convention)
        forms = elastic_stiffness_forms(net, p)
        comps = 3
    else:
        gamma = random_edge_coefficients(net, stream(cfg.seed, "gamma"),
                                         cfg.gamma_low, cfg.gamma_high)
        forms = scalar_stiffness_forms(net, gamma)
        comps = 1
    dofs = DofMap.for_network(net, comps)
    M_full = assemble_mass(net, comps)
    K = dofs.restrict_matrix(forms.matrix())
    M = dofs.restrict_matrix(M_full)
    return Problem(net, dofs, forms, M_full, K, M)


def build_basis(cfg, prob, H):
    t0 = time.perf_counter()
    mesh = build_mesh(prob.net, H)
    interp = build_interpolator(mesh, prob.net)
    space = coarse_space(mesh, interp, prob.dofs)
    basis = build_multiscale_basis(space, prob.forms, prob.M_full, cfg.k_for(H),
                                   method=cfg.method, workers=cfg.workers)
    return basis, time.perf_counter() - t0


class _ErrorTracker:
    """Max-over-time K-norm error of ``u^{n+1/2}`` and M-norm error of the
    discrete velocity for one multiscale run."""

    def __init__(self, basis, K, M, tau):
        self.B, self.K, self.M, self.tau = basis.B, K, M, tau
        self.eK = 0.0
        self.eM = 0.0

    def update(self, a, b, half_ref, vel_ref):
        d = self.B @ (0.5 * (a + b)) - half_ref
        v = self.B @ ((b - a) / self.tau) - vel_ref
        self.eK = max(self.eK, math.sqrt(max(float(d @ (self.K @ d)), 0.0)))
        self.eM = max(self.eM, math.sqrt(max(float(v @ (self.M @ v)), 0.0)))


def _energy_of(space, a, b, tau):
    v = (b - a) / tau
    w = 0.5 * (a + b)
    return float(v @ (space.M @ v)), float(w @ (space.K @ w))


def _sweep(cfg, prob, T, forcing, initial, reference):
    """Run every H in lockstep with ``reference``.

    ``initial(space)`` returns the two initial layers, ``reference`` is an
    iterator of ``(n, half_ref, vel_ref)``.
    """
    bases, runs, trackers, setup = [], [], [], []
    for H in cfg.H:
        basis, secs = build_basis(cfg, prob, H)
        space = MultiscaleSpace(basis)
        u0, u1 = initial(space)
        bases.append(basis)
        setup.append(secs)
        runs.append((space, iterate(space, T, cfg.tau, forcing, u0, u1)))
        trackers.append(_ErrorTracker(basis, prob.K, prob.M, cfg.tau))
        log.info("H=%g: %d coarse DOFs, setup %.2fs", H, basis.dim, secs)
    energies = [[] for _ in cfg.H]
    step_secs = [0.0] * len(cfg.H)
    for n, half_ref, vel_ref in reference:
        for i, (space, it) in enumerate(runs):
            t0 = time.perf_counter()
            m, a, b = next(it)
            step_secs[i] += time.perf_counter() - t0
            assert m == n
            trackers[i].update(a, b, half_ref, vel_ref)
            energies[i].append((n, (n + 0.5) * cfg.tau) + _energy_of(space, a, b, cfg.tau))
    rows = [ConvergenceRow(H, cfg.k_for(H), bs.dim, prob.dofs.n_free, tr.eK, tr.eM, s, st)
            for H, bs, tr, s, st in zip(cfg.H, bases, trackers, setup, step_secs)]
    energy = {H: np.array(e, dtype=float) for H, e in zip(cfg.H, energies)}
    return rows, energy


def _fine_reference(prob, T, tau, forcing, u0, u1):
    fine = FineSpace(prob.K, prob.M)
    for n, a, b in iterate(fine, T, tau, forcing, u0, u1):
        yield n, 0.5 * (a + b), (b - a) / tau


def _base_meta(cfg, prob, T):
    return {"experiment": cfg.experiment, "config": cfg.as_dict(), "T": T,
            "steps": num_steps(T, cfg.tau), "tau": cfg.tau,
            "k": [cfg.k_for(h) for h in cfg.H], "H": list(cfg.H),
            "nodes": prob.net.n_nodes, "edges": prob.net.n_edges,
            "boundary_nodes": int(len(prob.net.boundary)),
            "fine_dofs": prob.dofs.n_free, "version": __version__}


def _finish(cfg, rows, energy, meta):
    table = ConvergenceTable(cfg.experiment, rows, energy, meta)
    sK, sM = table.slopes
    table.meta.update(slope_K=sK, slope_M=sM, monotone=table.monotone())
    log.info("%s: slopes K %.3f, M %.3f", cfg.experiment, sK, sM)
    return table


# ---------------------------------------------------------------------------
# experiments


def run_eigenmode(cfg, net=None):
    """Standing wave from the ``eigen_index``-th eigenpair, exact reference."""
    with threadpool_limits(1):
        prob = build_problem(cfg, net)
        eig = smallest_eigenpairs(prob.K, prob.M, cfg.eigen_index, seed=cfg.seed)
        lam = float(eig.eigenvalues[-1])
        w = eig.eigenvectors[:, -1]
        # fix the sign so the run does not depend on the start vectors
        w = w * np.sign(w[np.argmax(np.abs(w))])
        omega = math.sqrt(lam)
        T = cfg.T or math.pi / omega
        zero = zero_forcing(prob.dofs.n_free)
        tau = cfg.tau

        def reference():
            for n in range(num_steps(T, tau)):
                t = (n + 0.5) * tau
                # D_t u(t_{n+1/2}) compared with the discrete velocity
                yield n, math.cos(omega * t) * w, -omega * math.sin(omega * t) * w

        rows, energy = _sweep(cfg, prob, T, zero,
                              lambda s: prepare_initial_data(w, np.zeros_like(w), zero, tau, s),
                              reference())
        meta = _base_meta(cfg, prob, T)
        meta.update(eigenvalue=lam, eigenvalues=[float(x) for x in eig.eigenvalues])
        return _finish(cfg, rows, energy, meta)


def run_scalar_inhomogeneous(cfg, net=None):
    """Load ``sin(2 pi t) * 1`` with zero initial data against a fine reference."""
    with threadpool_limits(1):
        prob = build_problem(cfg, net)
        n = prob.dofs.n_free
        f = sine_ones(n)
        if cfg.forcing_scale != 1.0:
            f = replace(f, profile=cfg.forcing_scale * f.profile)
        z = np.zeros(n)
        rows, energy = _sweep(cfg, prob, cfg.T, f, lambda s: (np.zeros(s.size), np.zeros(s.size)),
                              _fine_reference(prob, cfg.T, cfg.tau, f, z, z))
        return _finish(cfg, rows, energy, _base_meta(cfg, prob, cfg.T))


def run_elastic(cfg, net=None):
    """Out-of-plane load ``1e5 x_1^2 sin(0.4 pi t)`` on the elastic network."""
    with threadpool_limits(1):
        prob = build_problem(cfg, net)
        f = elastic_z_load(prob.net, prob.dofs, amplitude=1e5 * cfg.forcing_scale)
        z = np.zeros(prob.dofs.n_free)
        rows, energy = _sweep(cfg, prob, cfg.T, f, lambda s: (np.zeros(s.size), np.zeros(s.size)),
                              _fine_reference(prob, cfg.T, cfg.tau, f, z, z))
        return _finish(cfg, rows, energy, _base_meta(cfg, prob, cfg.T))


RUNNERS = {"eigenmode": run_eigenmode, "scalar_inhomogeneous": run_scalar_inhomogeneous,
           "elastic": run_elastic}


def run_experiment(cfg, net=None):
    return RUNNERS[cfg.experiment](cfg, net)


# ---------------------------------------------------------------------------
# output

CONVERGENCE_COLUMNS = ("H", "k", "coarse_dofs", "fine_dofs", "error_K", "error_M")


def _fmt(x):
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return FLOAT_FMT.format(float(x))


def _write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(_fmt(v) for v in r) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def _energy_rows(E):
    return [(int(r[0]), r[1], r[2], r[3], r[2] + r[3]) for r in E]


def _jsonable(x):
    if isinstance(x, float):
        return float(FLOAT_FMT.format(x)) if math.isfinite(x) else str(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, np.integer)):
        return _jsonable(x.item())
    return x


def emit_outputs(table, out_dir):
    """Write convergence, energy, timing, manifest and gnuplot data files.

    Everything except ``timings.csv`` is a deterministic function of the
    configuration.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = sorted(table.rows, key=lambda r: -r.H)
    _write_csv(out / "convergence.csv", CONVERGENCE_COLUMNS,
               [(r.H, r.k, r.coarse_dofs, r.fine_dofs, r.error_K, r.error_M) for r in rows])
    _write_csv(out / "timings.csv", ("H", "setup_seconds", "step_seconds"),
               [(r.H, r.setup_seconds, r.step_seconds) for r in rows])
    energy_cols = ("step", "t", "kinetic", "potential", "total")
    if table.energy:
        finest = min(table.energy)
        _write_csv(out / "energy.csv", energy_cols, _energy_rows(table.energy[finest]))
        for H, E in sorted(table.energy.items(), reverse=True):
            level = int(round(-math.log2(H)))
            _write_csv(out / f"energy_H{level}.csv", energy_cols, _energy_rows(E))
    dat = ["# H error_K error_M"] + [" ".join(_fmt(v) for v in (r.H, r.error_K, r.error_M))
                                      for r in rows]
    (out / "convergence.dat").write_text("\n".join(dat) + "\n")
    if table.energy:
        E = table.energy[min(table.energy)]
        dat = ["# t kinetic potential total"] + [
            " ".join(_fmt(v) for v in (r[1], r[2], r[3], r[2] + r[3])) for r in E]
        (out / "energy.dat").write_text("\n".join(dat) + "\n")
    (out / "meta.json").write_text(json.dumps(_jsonable(table.meta), indent=2, sort_keys=True) + "\n")
    return out


def read_convergence_csv(path):
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    rows = []
    for line in lines[1:]:
        vals = line.split(",")
        rows.append({h: (int(v) if h in ("k", "coarse_dofs", "fine_dofs") else float(v))
                     for h, v in zip(header, vals)})
    return header, rows
