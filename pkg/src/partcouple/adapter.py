"""Solver-facing coupling adapter.

Typical use inside a time loop::

    adapter = Adapter("adapter-config.json")
    dt_max = adapter.initialize(on_coupling_edge, read_function_space=V, write_object=W, channel=ch)
    u_C = adapter.create_coupling_expression()
    while adapter.is_coupling_ongoing():
        if adapter.is_action_required(adapter.action_write_iteration_checkpoint()):
            adapter.store_checkpoint(u, t, n)
        adapter.update_coupling_expression(u_C, adapter.read_data())
        ...
        adapter.write_data(flux)
        dt_max = adapter.advance(dt)
        if adapter.is_action_required(adapter.action_read_iteration_checkpoint()):
            u, t, n = adapter.retrieve_checkpoint()

Read data that was never received is zero. Only one coupling mesh with one
read and one write field is supported.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .config import AdapterConfig
from .errors import (
    CheckpointActionNotPending,
    EmptyCouplingBoundary,
    ExpressionNotCreated,
    KindMismatch,
    NeitherReadNorWrite,
    NoCheckpointStored,
    NonFiniteSample,
    NotInitialized,
    OwnershipGap,
    OwnershipOverlap,
    ParallelPointSourcesUnsupported,
)
from .interface import Action, CouplingInterface
from .meshdata import CouplingMesh, DataField, Kind
from .reconstruct import BoundaryInterpolant, fit_interpolant


@dataclass(frozen=True, eq=False)
class FunctionSpace:
    """Vertices of the host discretization plus the value kind living on them.

    ``owners`` assigns every vertex to a logical partition (default: all 0).
    """

    points: np.ndarray
    kind: Kind = Kind.SCALAR
    owners: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class Function:
    """A function space together with values given by ``sampler(x, y)``."""

    space: FunctionSpace
    sampler: Callable


@dataclass(frozen=True)
class PointSource:
    location: tuple[float, float]
    magnitude: float


@dataclass(frozen=True)
class SolverCheckpoint:
    solution: object
    t: float
    n: int

    def get_state(self):
        return copy.deepcopy(self.solution), self.t, self.n


@dataclass(frozen=True)
class LogicalPartition:
    """Stand-in for one parallel rank: the coupling vertex ids it owns and its ghost copies."""

    rank: int
    owned: frozenset
    ghosts: frozenset = frozenset()

    def __init__(self, rank: int, owned: Iterable[int], ghosts: Iterable[int] = ()):
        object.__setattr__(self, "rank", rank)
        object.__setattr__(self, "owned", frozenset(int(i) for i in owned))
        object.__setattr__(self, "ghosts", frozenset(int(i) for i in ghosts))


class CouplingExpression:
    """Boundary condition value backed by a refittable interpolant.

    The handle stays valid across updates; every holder sees the latest data.
    """

    def __init__(self, kind: Kind = Kind.SCALAR):
        self.kind = kind
        self._interp: BoundaryInterpolant | None = None
        self._alive = True

    def update_boundary_data(self, values, x, y) -> None:
        pts = np.column_stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)])
        self._interp = fit_interpolant(pts, values)

    @property
    def initialized(self) -> bool:
        return self._interp is not None

    def __call__(self, x, y):
        if self._interp is None:
            # uninitialized expressions evaluate to zero, like unread coupling data
            shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
            return np.zeros(shape + ((2,) if self.kind is Kind.VECTOR2 else ()))[()]
        return self._interp(x, y)

    def release(self) -> None:
        self._alive = False
        self._interp = None


class Adapter:
    def __init__(self, adapter_config_filename="precice-adapter-config.json", *, coupling_config=None,
                 kernel: CouplingInterface | None = None):
        self.config = AdapterConfig.load(adapter_config_filename, coupling_config)
        if kernel is None:
            from .kernel import CouplingKernel

            kernel = CouplingKernel(self.config.coupling, self.config.participant_name)
        self._interface = kernel
        self._mesh: CouplingMesh | None = None
        self._read_kind: Kind | None = None
        self._write_kind: Kind | None = None
        self._checkpoint: SolverCheckpoint | None = None
        self._expressions: list[CouplingExpression] = []

    # -- setup -------------------------------------------------------------------

    def initialize(self, coupling_subdomain: Callable, read_function_space: FunctionSpace | None = None,
                   write_object: FunctionSpace | Function | None = None, channel=None) -> float:
        if read_function_space is None and write_object is None:
            raise NeitherReadNorWrite("provide read_function_space and/or write_object")
        write_space = write_object.space if isinstance(write_object, Function) else write_object
        space = read_function_space if read_function_space is not None else write_space

        pts = np.asarray(space.points, dtype=float).reshape(-1, 2)
        owners = np.zeros(len(pts), dtype=np.int64) if space.owners is None else np.asarray(space.owners)
        on_boundary = np.array([bool(coupling_subdomain(x, y)) for x, y in pts], dtype=bool)
        if not on_boundary.any():
            raise EmptyCouplingBoundary("no vertex satisfies the coupling subdomain")
        self._mesh = CouplingMesh(self.config.coupling_mesh_name, pts[on_boundary], owners[on_boundary])
        self._read_kind = read_function_space.kind if read_function_space is not None else None
        self._write_kind = write_space.kind if write_space is not None else None

        initial = None
        if isinstance(write_object, Function):
            initial = self._sample(write_object.sampler, self._write_kind)
        return self._interface.initialize(self._mesh, read_kind=self._read_kind, write_kind=self._write_kind,
                                          initial_data=initial, channel=channel)

    @property
    def coupling_mesh(self) -> CouplingMesh:
        self._require_init()
        return self._mesh

    # -- data access ---------------------------------------------------------------

    def read_data(self, partition: int | None = None) -> dict:
        """Map ``(x, y) -> value`` for the owned vertices of ``partition`` (all if None)."""
        self._require_init()
        data = self._interface.read_data()
        return self._as_dict(np.asarray(getattr(data, "values", data), dtype=float), partition)

    def read_initial_data(self, partition: int | None = None) -> dict:
        """Like :meth:`read_data`, for the values the peer supplied at initialization.

        The second participant's :meth:`read_data` already holds first-window
        data after ``initialize``; this is the window-start value.
        """
        self._require_init()
        data = self._interface.initial_read_data()
        return self._as_dict(np.asarray(getattr(data, "values", data), dtype=float), partition)

    def write_data(self, write_function: Callable) -> None:
        """Sample ``write_function(x, y)`` at the coupling vertices and hand it to the kernel."""
        self._require_init()
        kind = self._write_kind if self._write_kind is not None else Kind.SCALAR
        self._interface.write_data(self._sample(write_function, kind))

    def _sample(self, sampler: Callable, kind: Kind) -> DataField:
        vals = []
        for x, y in self._mesh.points:
            v = np.asarray(sampler(x, y), dtype=float)
            if not np.all(np.isfinite(v)):
                raise NonFiniteSample((x, y), v.tolist())
            vals.append(v)
        return DataField(self.config.write_data_name or "", kind, self._mesh, np.array(vals))

    def _as_dict(self, values: np.ndarray, partition: int | None) -> dict:
        out = {}
        for i, (x, y) in enumerate(self._mesh.points):
            if partition is not None and self._mesh.owners[i] != partition:
                continue
            v = values[i]
            out[(float(x), float(y))] = float(v) if np.ndim(v) == 0 else tuple(float(c) for c in v)
        return out

    # -- coupling expressions ----------------------------------------------------------

    def create_coupling_expression(self) -> CouplingExpression:
        self._require_init()
        expr = CouplingExpression(self._read_kind or Kind.SCALAR)
        self._expressions.append(expr)
        return expr

    def update_coupling_expression(self, coupling_expression: CouplingExpression, data: dict) -> None:
        if (coupling_expression is None or not coupling_expression._alive
                or not any(e is coupling_expression for e in self._expressions)):
            raise ExpressionNotCreated("update of an expression that was not created by this adapter")
        if not data:
            return
        coords = np.array(list(data.keys()), dtype=float)
        vals = np.array(list(data.values()), dtype=float)
        coupling_expression.update_boundary_data(vals, coords[:, 0], coords[:, 1])

    # -- point sources -------------------------------------------------------------

    def get_point_sources(self, data: dict) -> tuple[list[PointSource], list[PointSource]]:
        """One list of point sources per spatial dimension, rebuilt on every call."""
        self._require_init()
        active = {int(o) for o in self._mesh.owners}
        if len(active) > 1:
            raise ParallelPointSourcesUnsupported(
                "point sources cannot be generated when several partitions own coupling vertices "
                "(known FEniCS limitation for parallel PointSource)")
        xs, ys = [], []
        for loc, val in data.items():
            if np.ndim(val) == 0:
                raise KindMismatch("point sources need vector data (e.g. forces), got scalar values")
            fx, fy = val
            xs.append(PointSource((float(loc[0]), float(loc[1])), float(fx)))
            ys.append(PointSource((float(loc[0]), float(loc[1])), float(fy)))
        return xs, ys

    # -- checkpointing -------------------------------------------------------------

    def store_checkpoint(self, solution, t: float, n: int = 0) -> None:
        if not self._interface.is_action_required(Action.WRITE_ITERATION_CHECKPOINT):
            raise CheckpointActionNotPending("no write-iteration-checkpoint action is pending")
        self._checkpoint = SolverCheckpoint(copy.deepcopy(solution), t, n)
        self._interface.mark_action_fulfilled(Action.WRITE_ITERATION_CHECKPOINT)

    def retrieve_checkpoint(self):
        """Return ``(solution, t, n)``; the solution is a fresh copy."""
        if not self._interface.is_action_required(Action.READ_ITERATION_CHECKPOINT):
            raise CheckpointActionNotPending("no read-iteration-checkpoint action is pending")
        if self._checkpoint is None:
            raise NoCheckpointStored("no checkpoint has been stored")
        self._interface.mark_action_fulfilled(Action.READ_ITERATION_CHECKPOINT)
        return self._checkpoint.get_state()

    # -- steering (forwarded) --------------------------------------------------------

    def advance(self, dt: float) -> float:
        return self._interface.advance(dt)

    def is_coupling_ongoing(self) -> bool:
        return self._interface.is_coupling_ongoing()

    def is_time_window_complete(self) -> bool:
        return self._interface.is_time_window_complete()

    def is_action_required(self, action: Action) -> bool:
        return self._interface.is_action_required(action)

    def mark_action_fulfilled(self, action: Action) -> None:
        self._interface.mark_action_fulfilled(action)

    @staticmethod
    def action_write_iteration_checkpoint() -> Action:
        return Action.WRITE_ITERATION_CHECKPOINT

    @staticmethod
    def action_read_iteration_checkpoint() -> Action:
        return Action.READ_ITERATION_CHECKPOINT

    @property
    def coupling_trace(self) -> list:
        return list(getattr(self._interface, "trace", []))

    # -- parallel ----------------------------------------------------------------

    def synchronize_ghost_values(self, partitions: list[LogicalPartition], local_values: list[dict] | None = None) -> list[dict]:
        """Give every partition the owner's value at each of its ghost vertices.

        ``local_values[i]`` maps coupling-vertex id -> value for partition
        ``i``; by default each partition's owned read data is used. Returns
        one ``{(x, y): value}`` dict per partition covering owned and ghost
        vertices.
        """
        self._require_init()
        if local_values is None:
            data = self._interface.read_data()
            values = np.asarray(getattr(data, "values", data), dtype=float)
            local_values = [{i: values[i] for i in p.owned} for p in partitions]
            local_values = [{i: (float(v) if np.ndim(v) == 0 else tuple(float(c) for c in v))
                             for i, v in lv.items()} for lv in local_values]
        synced = synchronize_ghosts(partitions, local_values)
        return [{(float(self._mesh.points[i][0]), float(self._mesh.points[i][1])): v for i, v in s.items()}
                for s in synced]

    def _require_init(self):
        if self._mesh is None:
            raise NotInitialized("call initialize() first")


def synchronize_ghosts(partitions: list[LogicalPartition], local_values: list[dict]) -> list[dict]:
    """Gather owned values from all partitions and scatter them to ghosts.

    ``local_values[i]`` must cover ``partitions[i].owned``; entries it has for
    ghost ids are overwritten.
    """
    owner = {}
    for p in partitions:
        for vid in p.owned:
            if vid in owner:
                raise OwnershipOverlap(f"vertex {vid} owned by partitions {owner[vid]} and {p.rank}")
            owner[vid] = p.rank
    by_rank = {p.rank: (p, lv) for p, lv in zip(partitions, local_values)}
    out = []
    for p, lv in zip(partitions, local_values):
        local = {vid: lv[vid] for vid in p.owned}
        for g in sorted(p.ghosts):
            if g not in owner:
                raise OwnershipGap(f"ghost vertex {g} of partition {p.rank} has no owner")
            local[g] = by_rank[owner[g]][1][g]
        out.append(local)
    return out
