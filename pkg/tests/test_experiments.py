import json

import numpy as np
import pytest

from netwave import experiments as ex
from netwave.experiments import (ConfigError, ConvergenceRow, ConvergenceTable, ExperimentConfig,
                                 emit_outputs, fit_slope, parse_config, read_convergence_csv)
from netwave.network import GeneratorConfig, assign_boundary, generate_fiber_network, on_faces
from netwave.operators import DofMap, ElasticParams, assemble_mass, elastic_stiffness_forms
from netwave.wave import FineSpace, elastic_z_load, run


@pytest.fixture(scope="module")
def tiny_net():
    return generate_fiber_network(GeneratorConfig(total_length=100, seed=1))


def test_config_defaults():
    cfg = ExperimentConfig("scalar")
    assert cfg.experiment == "scalar_inhomogeneous"
    assert (cfg.tau, cfg.T, cfg.boundary) == (2e-3, 2.0, "all")
    e = ExperimentConfig("elastic", H=[0.0625, 0.25])
    assert e.H == (0.25, 0.0625) and e.T == 10.0 and e.tau == 1e-2
    assert [e.k_for(h) for h in e.H] == [2, 4]


@pytest.mark.parametrize("kw", [dict(experiment="nope"), dict(experiment="eigenmode", H=0.3),
                                dict(experiment="eigenmode", boundary="top")])
def test_config_rejects(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw)


def test_parse_config():
    text = """
    # desk run
    experiment = "eigenmode"
    seed = 7
    H = 2^-2, 2^-3
    total-length = 90
    """
    cfg = parse_config(text, seed=9)
    assert cfg.seed == 9 and cfg.total_length == 90.0 and cfg.H == (0.25, 0.125)
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("experiment = elastic\ncolour = red")
    with pytest.raises(ConfigError, match="bad value"):
        parse_config("experiment = elastic\nseed = x")


def test_fit_slope():
    H = [0.25, 0.125, 0.0625]
    assert fit_slope(H, [3 * h**2 for h in H]) == pytest.approx(2.0)
    assert np.isnan(fit_slope(H, [1.0, 0.0, 1.0]))


def test_monotone_warning():
    rows = [ConvergenceRow(0.25, 2, 9, 100, 1.0, 1.0), ConvergenceRow(0.125, 3, 49, 100, 2.0, 0.5)]
    with pytest.warns(UserWarning):
        assert not ConvergenceTable("eigenmode", rows).monotone()


def test_emit_outputs_roundtrip(tmp_path):
    rows = [ConvergenceRow(0.25, 2, 9, 100, 1.5, 0.25, 1.0, 2.0),
            ConvergenceRow(0.125, 3, 49, 100, 0.75, 0.0625, 3.0, 4.0)]
    energy = {0.25: np.array([[0, 0.5, 1.0, 2.0]]), 0.125: np.array([[0, 0.5, 1.0, 2.5]])}
    meta = {"seed": 3, "H": [0.25, 0.125], "k": [2, 3], "tau": 1e-3}
    out = emit_outputs(ConvergenceTable("eigenmode", rows, energy, meta), tmp_path)
    header, back = read_convergence_csv(out / "convergence.csv")
    assert len(header) == 6
    assert [r["error_K"] for r in back] == [1.5, 0.75]
    assert back[1]["coarse_dofs"] == 49
    m = json.loads((out / "meta.json").read_text())
    assert m["seed"] == 3 and m["k"] == [2, 3] and m["tau"] == 1e-3
    for name in ("energy.csv", "energy_H2.csv", "energy_H3.csv", "timings.csv",
                 "convergence.dat", "energy.dat"):
        assert (out / name).exists()
    assert "2.5" in (out / "energy.csv").read_text().splitlines()[1].split(",")[3]


def test_zero_forcing_gives_zero_error(tiny_net):
    cfg = ExperimentConfig("scalar", H=(0.25, 0.125), T=0.05, forcing_scale=0.0)
    net = assign_boundary(tiny_net, on_faces(0))
    table = ex.run_experiment(cfg, net)
    assert all(r.error_K == 0.0 and r.error_M == 0.0 for r in table.rows)


def test_saturated_scalar_matches_reference(tiny_net):
    # k large enough that every patch is the whole domain
    net = assign_boundary(tiny_net, on_faces(0))
    cfg = ExperimentConfig("scalar", H=(0.25,), k=4, T=0.1, boundary="x1")
    table = ex.run_experiment(cfg, net)
    from netwave.lod import build_ideal_basis
    prob = ex.build_problem(cfg, net)
    # the localized method equals the ideal one, whose error is the reported one
    assert table.rows[0].error_K > 0
    assert all(np.isnan(table.slopes))
    basis, _ = ex.build_basis(cfg, prob, 0.25)
    ideal = build_ideal_basis(basis.space, prob.forms, prob.M_full)
    assert np.abs(basis.K_ms - ideal.K_ms).max() <= 1e-8 * np.abs(ideal.K_ms).max()


def test_elastic_initial_snapshot_zero(tiny_net):
    cfg = ExperimentConfig("elastic", H=(0.25,), T=0.03)
    prob = ex.build_problem(cfg, assign_boundary(tiny_net, on_faces(0, (0.0,))))
    f = elastic_z_load(prob.net, prob.dofs)
    z = np.zeros(prob.dofs.n_free)
    first = []
    run(FineSpace(prob.K, prob.M), cfg.T, cfg.tau, f, z, z,
        callback=lambda n, a, b: first.append(a.copy()) if n == 0 else None)
    assert not np.any(first[0])


def test_elastic_inplane_decoupling(tiny_net):
    net = assign_boundary(tiny_net, on_faces(0, (0.0,)))
    forms = elastic_stiffness_forms(net, ElasticParams(), parts=("KE", "KB1"))
    dofs = DofMap.for_network(net, 3)
    K = dofs.restrict_matrix(forms.matrix())
    M = dofs.restrict_matrix(assemble_mass(net, 3))
    f = elastic_z_load(net, dofs)
    z = np.zeros(dofs.n_free)
    res = run(FineSpace(K, M), 0.5, 0.01, f, z, z)
    u = dofs.extend(res.state.u_curr).reshape(-1, 3)
    assert np.abs(u[:, 2]).max() > 0
    assert not np.any(u[:, :2])


def test_missing_network_file():
    cfg = ExperimentConfig("eigenmode", network_file="/nonexistent/net.txt")
    with pytest.raises(OSError):
        ex.build_network(cfg)
