"""Interface meshes and the data living on them.

Vertices are identified by position (ids ``0..N-1``); coordinates are never
used as keys. Meshes and fields are immutable once built.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import DegenerateSegment, DuplicateVertices, FieldMeshMismatch, ZeroVertices

DIM = 2
DUPLICATE_TOL = 1e-12


class Kind(enum.IntEnum):
    SCALAR = 0
    VECTOR2 = 1

    @property
    def components(self) -> int:
        return 1 if self is Kind.SCALAR else DIM


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CouplingMesh:
    """Named, ordered set of 2D interface vertices with owner partitions.

    ``parent_ids`` maps each vertex to its id in the mesh it was restricted
    from (identity for a root mesh).
    """

    name: str
    points: np.ndarray
    owners: np.ndarray = None
    parent_ids: np.ndarray = None

    def __post_init__(self):
        if not self.name:
            raise ValueError("mesh name must be non-empty")
        pts = np.asarray(self.points, dtype=float).reshape(-1, DIM)
        n = len(pts)
        owners = np.zeros(n, dtype=np.int64) if self.owners is None else np.asarray(self.owners, dtype=np.int64)
        parents = np.arange(n, dtype=np.int64) if self.parent_ids is None else np.asarray(self.parent_ids, dtype=np.int64)
        if owners.shape != (n,) or parents.shape != (n,):
            raise ValueError("owners and parent_ids need one entry per vertex")
        if not np.all(np.isfinite(pts)):
            raise ValueError("vertex coordinates must be finite")
        if n > 1:
            pairs = cKDTree(pts).query_pairs(DUPLICATE_TOL, p=np.inf)
            if pairs:
                i, j = min(pairs)
                raise DuplicateVertices(f"vertices {i} and {j} of mesh {self.name!r} coincide at {tuple(pts[i])}")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "owners", _frozen(owners))
        object.__setattr__(self, "parent_ids", _frozen(parents))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def ids(self) -> np.ndarray:
        return np.arange(len(self), dtype=np.int64)

    @property
    def inactive(self) -> bool:
        """True for a partition that owns no coupling vertex."""
        return len(self) == 0

    @property
    def partitions(self) -> list[int]:
        return sorted(set(int(o) for o in self.owners))

    def same_vertices(self, other: CouplingMesh) -> bool:
        return len(self) == len(other) and np.array_equal(self.points, other.points)


@dataclass(frozen=True, eq=False)
class DataField:
    """Per-vertex values of one kind on one mesh.

    ``values`` has shape ``(N,)`` for scalars and ``(N, 2)`` for vectors and
    is read-only.
    """

    name: str
    kind: Kind
    mesh: CouplingMesh
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        kind = Kind(self.kind)
        vals = np.asarray(self.values, dtype=float)
        expected = (len(self.mesh),) if kind is Kind.SCALAR else (len(self.mesh), DIM)
        if vals.shape != expected:
            try:
                vals = vals.reshape(expected)
            except ValueError:
                raise FieldMeshMismatch(
                    f"field {self.name!r} has shape {vals.shape}, mesh {self.mesh.name!r} needs {expected}"
                ) from None
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "values", _frozen(vals))

    def __len__(self) -> int:
        return len(self.values)

    def components(self) -> np.ndarray:
        """Values as an ``(N, ncomp)`` array."""
        return self.values.reshape(len(self.values), -1)

    def with_values(self, values) -> DataField:
        return DataField(self.name, self.kind, self.mesh, values)

    def renamed(self, name: str) -> DataField:
        return DataField(name, self.kind, self.mesh, self.values)


def _owner_array(owner_of, n: int) -> np.ndarray:
    if owner_of is None:
        return np.zeros(n, dtype=np.int64)
    if callable(owner_of):
        return np.array([owner_of(i) for i in range(n)], dtype=np.int64)
    if np.isscalar(owner_of):
        return np.full(n, int(owner_of), dtype=np.int64)
    owners = np.asarray(owner_of, dtype=np.int64)
    if owners.shape != (n,):
        raise ValueError(f"expected {n} owners, got {owners.shape}")
    return owners


def build_edge_mesh(
    name: str,
    p0: Sequence[float],
    p1: Sequence[float],
    n: int,
    owner_of: Callable[[int], int] | Sequence[int] | int | None = None,
) -> CouplingMesh:
    """``n`` vertices uniformly spaced on the closed segment ``[p0, p1]``.

    ``owner_of`` is a callable ``id -> partition``, a sequence of partitions,
    a single partition for all vertices, or None (everything on partition 0).
    """
    if n < 1:
        raise ZeroVertices(f"mesh {name!r} needs at least one vertex")
    a = np.asarray(p0, dtype=float)
    b = np.asarray(p1, dtype=float)
    if np.linalg.norm(b - a) < DUPLICATE_TOL:
        raise DegenerateSegment(f"segment {tuple(a)} -> {tuple(b)} has zero length")
    if n == 1:
        pts = a[None, :]
    else:
        s = np.arange(n) / (n - 1)
        pts = a[None, :] + s[:, None] * (b - a)[None, :]
        pts[-1] = b
    return CouplingMesh(name, pts, _owner_array(owner_of, n))


def field_constant(mesh: CouplingMesh, kind: Kind, c, name: str = "") -> DataField:
    kind = Kind(kind)
    if kind is Kind.SCALAR:
        vals = np.full(len(mesh), float(c))
    else:
        vals = np.tile(np.asarray(c, dtype=float).reshape(DIM), (len(mesh), 1))
    return DataField(name, kind, mesh, vals)


def field_zeros(mesh: CouplingMesh, kind: Kind, name: str = "") -> DataField:
    return field_constant(mesh, kind, 0.0 if Kind(kind) is Kind.SCALAR else (0.0, 0.0), name)


def restrict_to_owned(mesh: CouplingMesh, partition: int) -> CouplingMesh:
    """Sub-mesh of the vertices owned by ``partition``.

    An empty result is legal and marks an inactive partition.
    """
    keep = np.flatnonzero(mesh.owners == partition)
    return CouplingMesh(mesh.name, mesh.points[keep], mesh.owners[keep], mesh.parent_ids[keep])
