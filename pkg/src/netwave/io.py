"""File formats: network text/binary files, vector snapshots and the
checksummed array container used for multiscale bases."""
import json
import struct
import zlib
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from netwave.network import Network

TEXT_MAGIC = "NETFMT"
VECTOR_MAGIC = "NETVEC"
CONTAINER_MAGIC = b"NETWAVE\0"
FORMAT_VERSION = 1


class FormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# container: magic | u32 version | u64 header length | JSON header | arrays | u32 crc


def write_container(path, arrays, meta=None):
    """Write named arrays little-endian with a trailing CRC32."""
    entries = []
    blobs = []
    for name in sorted(arrays):
        a = np.asarray(arrays[name])
        dt = a.dtype.newbyteorder("<")
        blob = np.ascontiguousarray(a, dtype=dt).tobytes()
        entries.append({"name": name, "dtype": dt.str, "shape": list(a.shape), "nbytes": len(blob)})
        blobs.append(blob)
    header = json.dumps({"arrays": entries, "meta": meta or {}}, sort_keys=True).encode()
    body = (CONTAINER_MAGIC + struct.pack("<IQ", FORMAT_VERSION, len(header)) + header
            + b"".join(blobs))
    Path(path).write_bytes(body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))


def read_container(path):
    raw = Path(path).read_bytes()
    if not raw.startswith(CONTAINER_MAGIC):
        raise FormatError(f"{path}: not a netwave binary file")
    if len(raw) < len(CONTAINER_MAGIC) + 16:
        raise FormatError(f"{path}: truncated file")
    body, (crc,) = raw[:-4], struct.unpack("<I", raw[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise FormatError(f"{path}: checksum mismatch")
    off = len(CONTAINER_MAGIC)
    version, hlen = struct.unpack_from("<IQ", body, off)
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")
    off += 12
    header = json.loads(body[off:off + hlen])
    off += hlen
    arrays = {}
    for ent in header["arrays"]:
        n = ent["nbytes"]
        arrays[ent["name"]] = np.frombuffer(body[off:off + n], dtype=ent["dtype"]).reshape(ent["shape"]).copy()
        off += n
    if off != len(body):
        raise FormatError(f"{path}: trailing bytes after array data")
    return arrays, header["meta"]


# ---------------------------------------------------------------------------
# networks


def write_network_text(net, path):
    d = net.dim
    lines = [f"{TEXT_MAGIC} {FORMAT_VERSION} {d} {net.n_nodes} {net.n_edges} {len(net.boundary)}"]
    lines += [" ".join(f"{c:.17e}" for c in x) for x in net.nodes]
    lines += [f"{i} {j}" for i, j in net.edges]
    lines += [str(int(b)) for b in net.boundary]
    Path(path).write_text("\n".join(lines) + "\n")


def read_network_text(path):
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 6 or head[0] != TEXT_MAGIC:
            raise FormatError(f"{path}: missing {TEXT_MAGIC} header")
        version, d, n, e, nb = (int(v) for v in head[1:])
        if version != FORMAT_VERSION:
            raise FormatError(f"{path}: unsupported format version {version}")
        rest = fh.read().split()
    need = n * d + 2 * e + nb
    if len(rest) != need:
        raise FormatError(f"{path}: expected {need} values after the header, found {len(rest)}")
    nodes = np.array(rest[:n * d], dtype=float).reshape(n, d)
    edges = np.array(rest[n * d:n * d + 2 * e], dtype=np.int64).reshape(e, 2)
    boundary = np.array(rest[n * d + 2 * e:], dtype=np.int64)
    return Network(nodes, edges, boundary)


def write_network_binary(net, path):
    write_container(path, {"nodes": net.nodes.astype(np.float64),
                           "edges": net.edges.astype(np.int64),
                           "boundary": net.boundary.astype(np.int64)},
                    meta={"kind": "network"})


def read_network_binary(path):
    arrays, meta = read_container(path)
    if meta.get("kind") != "network":
        raise FormatError(f"{path}: container does not hold a network")
    return Network(arrays["nodes"], arrays["edges"], arrays["boundary"])


def write_network(net, path, binary=False):
    (write_network_binary if binary else write_network_text)(net, path)


def load_network(path):
    with open(path, "rb") as fh:
        magic = fh.read(len(CONTAINER_MAGIC))
    if magic == CONTAINER_MAGIC:
        return read_network_binary(path)
    return read_network_text(path)


# ---------------------------------------------------------------------------
# vectors


def write_vector(path, values, components=1):
    """Node-major vector, one node per line."""
    v = np.asarray(values, dtype=float).reshape(-1, components)
    lines = [f"{VECTOR_MAGIC} {FORMAT_VERSION} {v.shape[0]} {components}"]
    lines += [" ".join(f"{c:.17e}" for c in row) for row in v]
    Path(path).write_text("\n".join(lines) + "\n")


def read_vector(path):
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 4 or head[0] != VECTOR_MAGIC:
            raise FormatError(f"{path}: missing {VECTOR_MAGIC} header")
        n, c = int(head[2]), int(head[3])
        vals = np.array(fh.read().split(), dtype=float)
    if vals.size != n * c:
        raise FormatError(f"{path}: expected {n * c} values, found {vals.size}")
    return vals if c == 1 else vals.reshape(n, c)


# ---------------------------------------------------------------------------
# multiscale bases


def save_basis(path, basis, meta=None):
    B = sp.csr_matrix(basis.B)
    dofs = basis.space.dofs
    info = {"kind": "basis", "H": basis.H, "k": basis.k, "components": dofs.components,
            "n_nodes": dofs.n_nodes}
    info.update(meta or {})
    write_container(path, {
        "B_data": B.data, "B_indices": B.indices.astype(np.int64),
        "B_indptr": B.indptr.astype(np.int64), "B_shape": np.array(B.shape, dtype=np.int64),
        "K_ms": basis.K_ms, "M_ms": basis.M_ms, "free_dofs": dofs.free.astype(np.int64),
        "coarse_dofs": basis.space.coarse_free_dofs.astype(np.int64)}, meta=info)


def load_basis(path):
    """Return a dict with ``B`` (sparse), ``K_ms``, ``M_ms`` and metadata."""
    arrays, meta = read_container(path)
    if meta.get("kind") != "basis":
        raise FormatError(f"{path}: container does not hold a multiscale basis")
    B = sp.csr_matrix((arrays["B_data"], arrays["B_indices"], arrays["B_indptr"]),
                      shape=tuple(arrays["B_shape"]))
    out = {"B": B, "K_ms": arrays["K_ms"], "M_ms": arrays["M_ms"],
           "free_dofs": arrays["free_dofs"], "coarse_dofs": arrays["coarse_dofs"]}
    out.update(meta)
    return out
