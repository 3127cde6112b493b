"""Class-grouped dictionaries and their 2-D proxy planes.

Atoms of one class occupy one rectangular block of the plane, blocks are
packed row-major into a near-square grid. Atom ``k`` of class ``i`` is the
``k``-th cell (row-major) of block ``i``; cells beyond ``atoms_per_class``
and blocks beyond ``c`` are dead and always read as zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from .data import FeatureDataset
from .errors import DataError, DimensionError, ParameterError
from .linalg import ProjectionMatrix, normalize_columns, ridge_denoiser

DEFAULT_LAMBDA = 2e-12


@dataclass(frozen=True)
class ClassLayout:
    c: int
    atoms_per_class: int
    block_rows: int
    block_cols: int
    grid_rows: int
    grid_cols: int

    @property
    def n(self) -> int:
        return self.c * self.atoms_per_class

    @property
    def plane_rows(self) -> int:
        return self.grid_rows * self.block_rows

    @property
    def plane_cols(self) -> int:
        return self.grid_cols * self.block_cols

    @property
    def plane_shape(self) -> tuple:
        return (self.plane_rows, self.plane_cols)

    def block_origin(self, cls: int) -> tuple:
        return ((cls // self.grid_cols) * self.block_rows,
                (cls % self.grid_cols) * self.block_cols)

    def block_slices(self, cls: int) -> tuple:
        r0, c0 = self.block_origin(cls)
        return (slice(r0, r0 + self.block_rows), slice(c0, c0 + self.block_cols))

    @cached_property
    def cells(self) -> np.ndarray:
        """``(n, 2)`` array mapping atom index to (plane row, plane col)."""
        k = np.arange(self.n)
        cls, j = np.divmod(k, self.atoms_per_class)
        r0 = (cls // self.grid_cols) * self.block_rows
        c0 = (cls % self.grid_cols) * self.block_cols
        return np.stack([r0 + j // self.block_cols, c0 + j % self.block_cols], axis=1)

    @cached_property
    def flat_cells(self) -> np.ndarray:
        return self.cells[:, 0] * self.plane_cols + self.cells[:, 1]

    @cached_property
    def live_mask(self) -> np.ndarray:
        mask = np.zeros(self.plane_shape, dtype=bool)
        mask[self.cells[:, 0], self.cells[:, 1]] = True
        return mask

    def atom_class(self, k) -> np.ndarray:
        return np.asarray(k) // self.atoms_per_class

    def to_plane(self, x) -> np.ndarray:
        """Scatter ``(..., n)`` coefficients into ``(..., rows, cols)`` planes."""
        x = np.asarray(x)
        if x.shape[-1] != self.n:
            raise DimensionError(f"expected {self.n} coefficients, got {x.shape[-1]}")
        out = np.zeros(x.shape[:-1] + (self.plane_rows * self.plane_cols,), dtype=x.dtype)
        out[..., self.flat_cells] = x
        return out.reshape(x.shape[:-1] + self.plane_shape)

    def flatten(self, plane) -> np.ndarray:
        """Gather live cells of ``(..., rows, cols)`` planes back to ``(..., n)``."""
        plane = np.asarray(plane)
        if plane.shape[-2:] != self.plane_shape:
            raise DimensionError(
                f"plane shape {plane.shape[-2:]} does not match layout {self.plane_shape}")
        flat = plane.reshape(plane.shape[:-2] + (-1,))
        return flat[..., self.flat_cells]

    def to_dict(self) -> dict:
        return {"c": self.c, "atoms_per_class": self.atoms_per_class}


def build_layout(c: int, atoms_per_class: int) -> ClassLayout:
    if c < 2 or atoms_per_class < 1:
        raise ParameterError(
            f"layout needs c >= 2 and atoms_per_class >= 1, got {c}, {atoms_per_class}")
    br = math.isqrt(atoms_per_class)
    if br * br < atoms_per_class:
        br += 1
    bc = -(-atoms_per_class // br)
    gc = math.isqrt(c)
    if gc * gc < c:
        gc += 1
    gr = -(-c // gc)
    return ClassLayout(c, atoms_per_class, br, bc, gr, gc)


@dataclass(frozen=True)
class ProxyPlane:
    plane: np.ndarray
    flat: np.ndarray


def plane_flatten(p, layout: ClassLayout) -> np.ndarray:
    plane = p.plane if isinstance(p, ProxyPlane) else p
    return layout.flatten(plane)


@dataclass(frozen=True)
class Dictionary:
    Phi: np.ndarray
    D: np.ndarray
    B: np.ndarray
    layout: ClassLayout
    lam: float
    class_names: tuple
    # Row index into the training pool of each atom.
    atom_source: Optional[np.ndarray] = None

    @property
    def m(self) -> int:
        return self.D.shape[0]

    @property
    def n(self) -> int:
        return self.D.shape[1]

    @property
    def n_classes(self) -> int:
        return self.layout.c

    @property
    def atom_labels(self) -> np.ndarray:
        return self.layout.atom_class(np.arange(self.n))

    def class_columns(self, cls: int) -> slice:
        a = self.layout.atoms_per_class
        return slice(cls * a, (cls + 1) * a)


def dictionary_from_atoms(Phi, A, layout: ClassLayout, lam: float = DEFAULT_LAMBDA,
                          class_names=None, atom_source=None) -> Dictionary:
    """Assemble a :class:`Dictionary` from class-ordered raw atoms ``Phi``."""
    Phi = normalize_columns(Phi)
    if Phi.shape[1] != layout.n:
        raise DimensionError(f"{Phi.shape[1]} atoms for a layout of {layout.n}")
    D = normalize_columns(np.asarray(A, dtype=np.float64) @ Phi)
    B = ridge_denoiser(D, lam)
    if class_names is None:
        class_names = tuple(f"class{i}" for i in range(layout.c))
    return Dictionary(Phi, D, B, layout, float(lam), tuple(class_names), atom_source)


def build_dictionary(train: FeatureDataset, atoms_per_class: int, P: ProjectionMatrix,
                     lam: float = DEFAULT_LAMBDA, seed=0) -> Dictionary:
    """Draw ``atoms_per_class`` samples per class (seeded, no replacement)
    and build ``Phi``, ``D = A Phi`` and the denoiser ``B``.

    The draw order sets the row-major fill order inside each class block.
    """
    rng = np.random.default_rng(seed)
    counts = train.class_counts()
    for cls, cnt in enumerate(counts):
        if cnt < atoms_per_class:
            raise DataError(
                f"class {train.class_names[cls]!r} has {cnt} training samples, "
                f"needs {atoms_per_class} atoms")
    layout = build_layout(train.n_classes, atoms_per_class)
    picks = []
    for cls in range(train.n_classes):
        pool = np.flatnonzero(train.labels == cls)
        picks.append(rng.choice(pool, size=atoms_per_class, replace=False))
    source = np.concatenate(picks)
    return dictionary_from_atoms(train.features[source].T, P.A, layout, lam,
                                 train.class_names, source)


def proxy(dic: Dictionary, y, mode: str = "ridge") -> ProxyPlane:
    """Coarse coefficient estimate ``B y`` (ridge) or ``D^T y`` (correlation)."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape[-1] != dic.m:
        raise DimensionError(f"query length {y.shape[-1]} != dictionary rows {dic.m}")
    if mode == "ridge":
        flat = y @ dic.B.T
    elif mode == "correlation":
        flat = y @ dic.D
    else:
        raise ParameterError(f"unknown proxy mode {mode!r}")
    return ProxyPlane(dic.layout.to_plane(flat), flat)
