import numpy as np
import pytest

from netwave.coarse import build_interpolator, build_mesh, coarse_space
from netwave.io import (FormatError, load_basis, load_network, read_container, read_vector,
                        save_basis, write_container, write_network, write_vector)
from netwave.lod import build_multiscale_basis


def same_network(a, b):
    return (np.array_equal(a.nodes, b.nodes) and np.array_equal(a.edges, b.edges)
            and np.array_equal(a.boundary, b.boundary))


@pytest.mark.parametrize("binary", [False, True])
def test_network_roundtrip(small_net, tmp_path, binary):
    path = tmp_path / "net.dat"
    write_network(small_net, path, binary=binary)
    assert same_network(load_network(path), small_net)


def test_vector_roundtrip(tmp_path):
    v = np.random.default_rng(0).standard_normal(30)
    write_vector(tmp_path / "v.txt", v)
    assert np.array_equal(read_vector(tmp_path / "v.txt"), v)
    write_vector(tmp_path / "w.txt", v, components=3)
    assert np.array_equal(read_vector(tmp_path / "w.txt"), v.reshape(10, 3))


def test_container_roundtrip_and_corruption(tmp_path):
    path = tmp_path / "c.bin"
    arrays = {"a": np.arange(5, dtype=np.int64), "b": np.eye(3)}
    write_container(path, arrays, meta={"x": 1})
    back, meta = read_container(path)
    assert meta == {"x": 1}
    for k in arrays:
        assert np.array_equal(back[k], arrays[k])
    raw = bytearray(path.read_bytes())
    raw[40] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="checksum"):
        read_container(path)
    path.write_bytes(b"garbage")
    with pytest.raises(FormatError, match="not a netwave"):
        read_container(path)


def test_bad_text_header(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("hello\n")
    with pytest.raises(FormatError):
        load_network(p)


def test_basis_roundtrip(small_problem, tmp_path):
    mesh = build_mesh(small_problem.net, 0.25)
    space = coarse_space(mesh, build_interpolator(mesh, small_problem.net), small_problem.dofs)
    basis = build_multiscale_basis(space, small_problem.forms, small_problem.M_full, 1)
    save_basis(tmp_path / "b.nwb", basis, meta={"seed": 1})
    got = load_basis(tmp_path / "b.nwb")
    assert got["k"] == 1 and got["seed"] == 1 and got["H"] == 0.25
    assert abs(got["B"] - basis.B).max() == 0
    assert np.array_equal(got["K_ms"], basis.K_ms)
    with pytest.raises(FormatError, match="multiscale basis"):
        write_container(tmp_path / "x.bin", {"a": np.zeros(1)}, meta={"kind": "other"})
        load_basis(tmp_path / "x.bin")
