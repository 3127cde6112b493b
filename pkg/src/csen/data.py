"""Labeled feature-vector datasets and their on-disk formats.

Two formats are supported:

* CSV with header ``label,f0,f1,...`` and one sample per row. Class names
  are collected in first-appearance order.
* Packed binary: magic ``SPKD1``, little-endian u32 ``(samples, d, c)``,
  ``c`` length-prefixed (u32) UTF-8 class names, ``samples`` u32 labels,
  then ``samples * d`` little-endian float64 values in row-major order.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, DimensionError, ParameterError, ParseError

BINARY_MAGIC = b"SPKD1"


@dataclass(frozen=True)
class FeatureDataset:
    features: np.ndarray
    labels: np.ndarray
    class_names: tuple
    provenance: str = ""
    # Row index in the parent dataset each sample was derived from, if any.
    source_index: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "class_names", tuple(self.class_names))
        if X.ndim != 2 or X.shape[0] < 1:
            raise DimensionError(f"features must be a non-empty 2-D array, got {X.shape}")
        if y.shape != (X.shape[0],):
            raise DimensionError(
                f"{y.shape[0] if y.ndim else 0} labels for {X.shape[0]} samples")
        if y.size and (y.min() < 0 or y.max() >= len(self.class_names)):
            raise DataError("label index outside the class-name table")
        if not np.all(np.isfinite(X)):
            raise DataError("features contain non-finite values")

    @property
    def n_samples(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_classes)

    def subset(self, indices) -> "FeatureDataset":
        """Rows selected by an index array or a boolean mask."""
        indices = np.asarray(indices)
        if indices.dtype == bool:
            if indices.shape != (self.n_samples,):
                raise DimensionError(
                    f"mask of shape {indices.shape} for {self.n_samples} samples")
            indices = np.flatnonzero(indices)
        indices = indices.astype(np.int64)
        return FeatureDataset(
            self.features[indices], self.labels[indices], self.class_names,
            provenance=self.provenance, source_index=indices.copy())

    def with_features(self, features) -> "FeatureDataset":
        return FeatureDataset(features, self.labels, self.class_names,
                              self.provenance, self.source_index)

    def __eq__(self, other):
        if not isinstance(other, FeatureDataset):
            return NotImplemented
        return (self.class_names == other.class_names
                and np.array_equal(self.labels, other.labels)
                and self.features.shape == other.features.shape
                and np.array_equal(self.features, other.features))

    __hash__ = None


def generate_synthetic(c: int, per_class: int, d: int, separation: float,
                       seed: int = 0) -> FeatureDataset:
    """Gaussian clusters with unit covariance centred at ``separation * u_i``.

    The ``u_i`` are seeded random orthonormal directions, so any two class
    means are ``separation * sqrt(2)`` apart.
    """
    if c < 2 or per_class < 1 or d < 2 or separation < 0:
        raise ParameterError(
            f"invalid synthetic parameters c={c} per_class={per_class} "
            f"d={d} separation={separation}")
    if c > d:
        raise ParameterError(f"cannot place {c} orthonormal means in {d} dimensions")
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((d, c)))
    means = separation * Q.T
    labels = np.repeat(np.arange(c), per_class)
    X = means[labels] + rng.standard_normal((c * per_class, d))
    names = tuple(f"class{i}" for i in range(c))
    return FeatureDataset(X, labels, names, provenance=f"synthetic:seed={seed}")


# -- CSV ---------------------------------------------------------------------

def save_csv(ds: FeatureDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["label"] + [f"f{j}" for j in range(ds.dim)])
        for lab, row in zip(ds.labels, ds.features):
            w.writerow([ds.class_names[lab]] + [repr(float(v)) for v in row])


def _load_csv(path) -> FeatureDataset:
    names: list = []
    index: dict = {}
    labels, rows = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(f"{path}: empty file") from None
        if not header or header[0].strip() != "label" or len(header) < 2:
            raise ParseError(f"{path}:1: header must start with 'label,f0,...'")
        for j, col in enumerate(header[1:]):
            if col.strip() != f"f{j}":
                raise ParseError(f"{path}:1: column {j + 1} should be 'f{j}', got {col!r}")
        d = len(header) - 1
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != d + 1:
                raise ParseError(
                    f"{path}:{lineno}: expected {d + 1} fields, got {len(rec)}")
            try:
                vals = [float(v) for v in rec[1:]]
            except ValueError as exc:
                raise ParseError(f"{path}:{lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError(f"{path}:{lineno}: non-finite feature value")
            name = rec[0]
            if name not in index:
                index[name] = len(names)
                names.append(name)
            labels.append(index[name])
            rows.append(vals)
    if not rows:
        raise ParseError(f"{path}: no samples")
    return FeatureDataset(np.array(rows), np.array(labels), tuple(names),
                          provenance=str(path))


# -- packed binary -----------------------------------------------------------

def save_binary(ds: FeatureDataset, path) -> None:
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<3I", ds.n_samples, ds.dim, ds.n_classes))
        for name in ds.class_names:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        fh.write(ds.labels.astype("<u4").tobytes())
        fh.write(np.ascontiguousarray(ds.features, dtype="<f8").tobytes())


def _load_binary(path) -> FeatureDataset:
    buf = Path(path).read_bytes()
    pos = 0

    def take(nbytes, what):
        nonlocal pos
        if pos + nbytes > len(buf):
            raise ParseError(f"{path}: truncated at offset {pos} while reading {what}")
        chunk = buf[pos:pos + nbytes]
        pos += nbytes
        return chunk

    if take(len(BINARY_MAGIC), "magic") != BINARY_MAGIC:
        raise ParseError(f"{path}: unknown magic at offset 0")
    n, d, c = struct.unpack("<3I", take(12, "header counts"))
    names = []
    for i in range(c):
        (length,) = struct.unpack("<I", take(4, f"class name {i} length"))
        try:
            names.append(take(length, f"class name {i}").decode("utf-8"))
        except UnicodeDecodeError as exc:
            raise ParseError(f"{path}: class name {i} is not UTF-8: {exc}") from None
    labels = np.frombuffer(take(4 * n, "labels"), dtype="<u4").astype(np.int64)
    X = np.frombuffer(take(8 * n * d, "features"), dtype="<f8").reshape(n, d)
    if pos != len(buf):
        raise ParseError(f"{path}: {len(buf) - pos} trailing bytes at offset {pos}")
    if labels.size and labels.max() >= c:
        raise ParseError(f"{path}: label {labels.max()} >= class count {c}")
    if not np.all(np.isfinite(X)):
        bad = int(np.flatnonzero(~np.isfinite(X.ravel()))[0])
        raise ParseError(f"{path}: non-finite value at feature offset {pos - 8 * n * d + 8 * bad}")
    return FeatureDataset(X.astype(np.float64), labels, tuple(names),
                          provenance=str(path))


def load_dataset(path, format: Optional[str] = None) -> FeatureDataset:
    """Load a dataset; ``format`` is ``"csv"`` or ``"binary"`` (guessed from
    the file contents when omitted)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    if format is None:
        with open(path, "rb") as fh:
            format = "binary" if fh.read(len(BINARY_MAGIC)) == BINARY_MAGIC else "csv"
    try:
        if format == "csv":
            return _load_csv(path)
        if format in ("binary", "packed-binary"):
            return _load_binary(path)
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not a UTF-8 CSV file and no binary magic "
                         f"(byte offset {exc.start})") from None
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from None
    raise ParameterError(f"unknown dataset format {format!r}")


def save_dataset(ds: FeatureDataset, path, format: str = "csv") -> None:
    if format == "csv":
        save_csv(ds, path)
    elif format in ("binary", "packed-binary"):
        save_binary(ds, path)
    else:
        raise ParameterError(f"unknown dataset format {format!r}")


def concat(datasets: Sequence[FeatureDataset]) -> FeatureDataset:
    first = datasets[0]
    return FeatureDataset(
        np.vstack([d.features for d in datasets]),
        np.concatenate([d.labels for d in datasets]),
        first.class_names, provenance=first.provenance)
