"""Nearest-neighbor data mapping between non-matching interface meshes."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMesh, FieldMeshMismatch
from .meshdata import CouplingMesh, DataField

_CHUNK = 1024


class MappingKind(str, enum.Enum):
    CONSISTENT = "consistent"
    CONSERVATIVE = "conservative"


@dataclass(frozen=True)
class MappingPlan:
    """Index pairs produced by :func:`plan_mapping`.

    For a consistent plan ``pairs[t]`` is the source vertex feeding target
    ``t``; for a conservative plan ``pairs[s]`` is the target vertex that
    receives source ``s``.
    """

    kind: MappingKind
    source_size: int
    target_size: int
    pairs: np.ndarray


def nearest(query: np.ndarray, candidates: np.ndarray) -> np.ndarray:
    """Index of the nearest candidate for every query point, lowest id on ties."""
    out = np.empty(len(query), dtype=np.int64)
    for start in range(0, len(query), _CHUNK):
        q = query[start:start + _CHUNK]
        d = (q[:, None, 0] - candidates[None, :, 0]) ** 2 + (q[:, None, 1] - candidates[None, :, 1]) ** 2
        # argmin returns the first minimum, which is the lowest id
        out[start:start + _CHUNK] = np.argmin(d, axis=1)
    return out


def plan_mapping(kind: MappingKind | str, source: CouplingMesh, target: CouplingMesh) -> MappingPlan:
    kind = MappingKind(kind)
    if len(source) == 0 or len(target) == 0:
        raise EmptyMesh(f"cannot map {source.name!r} ({len(source)}) -> {target.name!r} ({len(target)})")
    if kind is MappingKind.CONSISTENT:
        pairs = nearest(target.points, source.points)
    else:
        pairs = nearest(source.points, target.points)
    pairs.setflags(write=False)
    return MappingPlan(kind, len(source), len(target), pairs)


def apply_mapping(plan: MappingPlan, source_data: DataField, target_mesh: CouplingMesh) -> DataField:
    if len(source_data) != plan.source_size:
        raise FieldMeshMismatch(f"field {source_data.name!r} has {len(source_data)} values, plan expects {plan.source_size}")
    if len(target_mesh) != plan.target_size:
        raise FieldMeshMismatch(f"target mesh {target_mesh.name!r} has {len(target_mesh)} vertices, plan expects {plan.target_size}")
    src = source_data.components()
    if plan.kind is MappingKind.CONSISTENT:
        out = src[plan.pairs]
    else:
        out = np.zeros((plan.target_size, src.shape[1]))
        for c in range(src.shape[1]):
            out[:, c] = np.bincount(plan.pairs, weights=src[:, c], minlength=plan.target_size)
    return DataField(source_data.name, source_data.kind, target_mesh, out)
