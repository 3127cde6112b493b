"""Versioned binary container for fitted models.

Layout::

    b"CSENMDL\\0"            8-byte magic
    u32 version              little-endian
    u32 header_length
    header                   UTF-8 JSON: metadata plus a tensor table
                             [{"name": ..., "shape": [...]}, ...]
    tensor data              float64 little-endian, row-major, in table order

Every tensor is widened to float64 on save; network parameters are cast
back to the model dtype on load, which is exact for float32.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..dictionary import ClassLayout, Dictionary, build_layout
from ..errors import CsenError, PersistenceError
from ..evaluation import ModelArtifact
from ..linalg import ProjectionMatrix, Standardizer
from ..network import LayerSpec, NetworkModel

MAGIC = b"CSENMDL\0"
FORMAT_VERSION = 1


def _tensors(art: ModelArtifact) -> dict:
    t = {
        "standardizer.mean": art.standardizer.mean,
        "standardizer.std": art.standardizer.std,
        "projection.A": art.projection.A,
        "projection.mean": art.projection.mean,
        "projection.eigenvalues": art.projection.eigenvalues,
    }
    if art.dictionary is not None:
        d = art.dictionary
        t.update({"dictionary.Phi": d.Phi, "dictionary.D": d.D, "dictionary.B": d.B})
        if d.atom_source is not None:
            t["dictionary.atom_source"] = d.atom_source
    if art.network is not None:
        for key, p in art.network.parameters():
            t[f"network.{key}"] = p
    if art.knn_X is not None:
        t["knn.X"] = art.knn_X
        t["knn.y"] = art.knn_y
    return t


def save_model(art: ModelArtifact, path) -> None:
    tensors = _tensors(art)
    header = {
        "method": art.method,
        "class_names": list(art.class_names),
        "settings": art.settings,
        "training_log": [float(v) for v in art.training_log],
        "tensors": [{"name": k, "shape": list(np.shape(v))} for k, v in tensors.items()],
    }
    if art.dictionary is not None:
        header["dictionary"] = {**art.dictionary.layout.to_dict(), "lam": art.dictionary.lam}
    if art.network is not None:
        net = art.network
        header["network"] = {
            "name": net.name,
            "specs": [s.to_dict() for s in net.specs],
            "input_shape": list(net.input_shape),
            "seed": net.seed,
            "dtype": net.dtype.name,
            "param_count": net.param_count(),
            "layout": net.layout.to_dict() if net.layout is not None else None,
        }
    raw = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", FORMAT_VERSION, len(raw)))
        fh.write(raw)
        for v in tensors.values():
            fh.write(np.ascontiguousarray(v, dtype="<f8").tobytes())


def read_header(path) -> tuple:
    """Validate magic, version and tensor table; return ``(header, tensors)``."""
    buf = Path(path).read_bytes()
    if len(buf) < len(MAGIC) + 8 or buf[:len(MAGIC)] != MAGIC:
        raise PersistenceError(f"{path}: not a model file (bad magic)")
    version, hlen = struct.unpack_from("<II", buf, len(MAGIC))
    if version != FORMAT_VERSION:
        raise PersistenceError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    start = len(MAGIC) + 8
    if start + hlen > len(buf):
        raise PersistenceError(f"{path}: truncated header")
    try:
        header = json.loads(buf[start:start + hlen].decode("utf-8"))
        table = [(e["name"], tuple(int(s) for s in e["shape"])) for e in header["tensors"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise PersistenceError(f"{path}: corrupt header: {exc}") from None
    pos = start + hlen
    need = sum(8 * int(np.prod(shape)) for _, shape in table)
    if len(buf) - pos != need:
        kind = "truncated" if len(buf) - pos < need else "has trailing bytes"
        raise PersistenceError(
            f"{path}: tensor data {kind} ({len(buf) - pos} bytes, table needs {need})")
    tensors = {}
    for name, shape in table:
        count = int(np.prod(shape))
        tensors[name] = np.frombuffer(buf, dtype="<f8", count=count, offset=pos) \
            .reshape(shape).astype(np.float64)
        pos += 8 * count
    return header, tensors


def load_model(path) -> ModelArtifact:
    header, t = read_header(path)
    try:
        return _build(header, t)
    except PersistenceError:
        raise
    except (CsenError, KeyError, TypeError, ValueError) as exc:
        raise PersistenceError(f"{path}: inconsistent model: {exc}") from None


def _layout(d) -> ClassLayout:
    return build_layout(int(d["c"]), int(d["atoms_per_class"]))


def _build(header, t) -> ModelArtifact:
    std = Standardizer(t["standardizer.mean"], t["standardizer.std"])
    proj = ProjectionMatrix(t["projection.A"], t["projection.mean"],
                            t["projection.eigenvalues"])
    if std.mean.shape != std.std.shape or proj.d != std.dim:
        raise PersistenceError("standardizer and projection shapes disagree")
    art = ModelArtifact(header["method"], tuple(header["class_names"]), std, proj,
                        settings=header["settings"], training_log=header["training_log"])
    if "dictionary" in header:
        meta = header["dictionary"]
        layout = _layout(meta)
        D, B = t["dictionary.D"], t["dictionary.B"]
        if D.shape != (proj.m, layout.n) or B.shape != (layout.n, proj.m):
            raise PersistenceError(
                f"dictionary shapes {D.shape}/{B.shape} do not fit layout n={layout.n}, m={proj.m}")
        src = t.get("dictionary.atom_source")
        art.dictionary = Dictionary(
            t["dictionary.Phi"], D, B, layout, float(meta["lam"]), art.class_names,
            src.astype(np.int64) if src is not None else None)
    if "network" in header:
        meta = header["network"]
        layout = _layout(meta["layout"]) if meta["layout"] is not None else None
        net = NetworkModel([LayerSpec.from_dict(s) for s in meta["specs"]],
                           tuple(meta["input_shape"]), layout, meta["name"],
                           int(meta["seed"]), np.dtype(meta["dtype"]))
        prefix = "network."
        net.set_parameters({k[len(prefix):]: v for k, v in t.items() if k.startswith(prefix)})
        if net.param_count() != int(meta["param_count"]):
            raise PersistenceError("network parameter count mismatch")
        art.network = net
    if "knn.X" in t:
        art.knn_X = t["knn.X"]
        art.knn_y = t["knn.y"].astype(np.int64)
    return art
