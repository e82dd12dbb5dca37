"""Serial Dirichlet-Neumann coupling kernel run by each participant.

Per completed time window the first participant sends its write data and
waits for a control message plus the second participant's data. The second
participant measures convergence on the data it read in this iteration,
relaxes the data it sends back (implicit schemes only) and broadcasts the
decision, so both sides walk through identical ``(window, iteration)``
sequences.

Each side maps incoming data from the peer mesh onto its own mesh.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import comm
from .acceleration import make_scheme
from .config import CouplingConfig
from .errors import (
    ActionNotPending,
    CouplingFinished,
    DtTooLarge,
    FieldMeshMismatch,
    HandshakeMismatch,
    NotInitialized,
    UnfulfilledAction,
)
from .interface import Action, CouplingInterface
from .mapping import apply_mapping, plan_mapping
from .meshdata import CouplingMesh, DataField, Kind, field_zeros

log = logging.getLogger(__name__)

TIME_EPS = 1e-12
ZERO_NORM = 1e-300


def residual_norm(previous: DataField, current: DataField) -> float:
    """Relative l2 change ``|current - previous| / |current|`` (absolute when current ~ 0)."""
    if len(previous) != len(current) or previous.kind != current.kind:
        raise FieldMeshMismatch(f"cannot compare {previous.name!r} ({len(previous)}) with {current.name!r} ({len(current)})")
    diff = float(np.linalg.norm((current.values - previous.values).ravel()))
    ref = float(np.linalg.norm(current.values.ravel()))
    return diff if ref < ZERO_NORM else diff / ref


def converged(previous_read: DataField, current_read: DataField, tol: float) -> bool:
    return residual_norm(previous_read, current_read) <= tol


@dataclass
class CouplingState:
    time: float = 0.0
    window_index: int = 0  # completed windows
    window_start: float = 0.0
    window_size: float = 0.0
    window_time_accumulated: float = 0.0
    iteration: int = 1
    ongoing: bool = True
    pending_actions: set = field(default_factory=set)
    last_window_converged: bool = False
    window_complete: bool = False


@dataclass(frozen=True)
class TraceEntry:
    window: int
    iteration: int
    time: float
    residual: float
    converged: bool


class CouplingKernel(CouplingInterface):
    def __init__(self, config: CouplingConfig, participant: str):
        self.config = config
        self.participant = participant
        self.peer = config.peer_of(participant)
        self.is_first = participant == config.first_participant
        self.implicit = config.scheme.implicit
        self.read_exchange = config.exchange_to(participant)
        self.write_exchange = config.exchange_from(participant)
        self.acceleration = make_scheme(config.acceleration) if self.implicit and not self.is_first else None
        self.state = CouplingState(window_size=min(config.time_window_size, config.max_time))
        self.trace: list[TraceEntry] = []
        self.mesh: CouplingMesh | None = None
        self.peer_mesh: CouplingMesh | None = None
        self.channel = None
        self._plan = None
        self._read: DataField | None = None
        self._write: DataField | None = None
        self._write_kind = Kind.SCALAR
        self._previous_read: DataField | None = None
        self._initial_read: DataField | None = None
        self._last_sent: DataField | None = None
        self._initialized = False

    # -- setup -----------------------------------------------------------------

    def initialize(self, mesh, *, read_kind=None, write_kind=None, initial_data=None, channel=None) -> float:
        if channel is None:
            raise NotInitialized("the coupling kernel needs a connected channel")
        self.mesh = mesh
        self.channel = channel
        read_kind = Kind(read_kind) if read_kind is not None else Kind.SCALAR
        if initial_data is not None:
            write_kind = initial_data.kind
        self._write_kind = Kind(write_kind) if write_kind is not None else Kind.SCALAR

        own_hash = self.config.canonical_hash()
        channel.send_message(comm.Message(comm.MessageKind.HANDSHAKE, comm.encode_control(
            {"participant": self.participant, "config_hash": own_hash})))
        peer = comm.decode_control(channel.expect(comm.MessageKind.HANDSHAKE).payload)
        if peer.get("config_hash") != own_hash:
            raise HandshakeMismatch(f"coupling config of {peer.get('participant')!r} differs from {self.participant!r}")
        if peer.get("participant") != self.peer:
            raise HandshakeMismatch(f"expected peer {self.peer!r}, got {peer.get('participant')!r}")

        channel.send_message(comm.Message(comm.MessageKind.MESH, comm.encode_mesh(mesh)))
        self.peer_mesh = comm.decode_mesh(channel.expect(comm.MessageKind.MESH).payload)
        if self.read_exchange is not None and len(mesh) and len(self.peer_mesh):
            self._plan = plan_mapping(self.read_exchange.mapping, self.peer_mesh, mesh)

        read_name = self.read_exchange.data if self.read_exchange else ""
        write_name = self.write_exchange.data if self.write_exchange else ""
        self._read = field_zeros(mesh, read_kind, read_name)

        # initial data, before any checkpoint action
        if initial_data is not None:
            self._write = initial_data.renamed(write_name)
        self._send_control({"initial_data": self._write is not None and self.write_exchange is not None})
        if self._write is not None and self.write_exchange is not None:
            self._send_field(self._write)
        if self._recv_control()["initial_data"]:
            self._read = self._recv_field()
        self._last_sent = self._write if self._write is not None else field_zeros(mesh, self._write_kind, write_name)
        self._previous_read = self._read
        self._initial_read = self._read

        self._initialized = True
        if not self.is_first and self._first_sends():
            self._read = self._recv_field()
        if self.implicit:
            self.state.pending_actions.add(Action.WRITE_ITERATION_CHECKPOINT)
        return self.state.window_size

    # -- data ------------------------------------------------------------------

    def write_data(self, field: DataField) -> None:
        self._require_init()
        if self.mesh is not None and len(field) != len(self.mesh):
            raise FieldMeshMismatch(f"write field has {len(field)} values, mesh has {len(self.mesh)}")
        name = self.write_exchange.data if self.write_exchange else field.name
        self._write = field.renamed(name)

    def read_data(self) -> DataField:
        self._require_init()
        return self._read

    def initial_read_data(self) -> DataField:
        self._require_init()
        return self._initial_read

    # -- steering ----------------------------------------------------------------

    def advance(self, dt: float) -> float:
        self._require_init()
        st = self.state
        if not st.ongoing:
            raise CouplingFinished("coupling has already finished")
        if st.pending_actions:
            names = ", ".join(sorted(a.value for a in st.pending_actions))
            raise UnfulfilledAction(f"fulfil pending actions before advancing: {names}")
        remaining = st.window_size - st.window_time_accumulated
        if not dt > 0:
            raise DtTooLarge(f"timestep must be positive, got {dt}")
        if dt > remaining + TIME_EPS:
            raise DtTooLarge(f"timestep {dt} exceeds remaining window time {remaining}")

        st.window_complete = False
        st.window_time_accumulated += dt
        if st.window_time_accumulated < st.window_size - TIME_EPS:
            st.time = st.window_start + st.window_time_accumulated
            return st.window_size - st.window_time_accumulated

        st.window_time_accumulated = st.window_size
        window_end = st.window_start + st.window_size
        if self.is_first:
            decision = self._exchange_first()
        else:
            decision = self._exchange_second(window_end)
        self.trace.append(TraceEntry(st.window_index + 1, st.iteration, window_end,
                                     decision["residual"], decision["converged"]))

        if decision["advance"]:
            st.window_index += 1
            st.window_start = min(st.window_index * self.config.time_window_size, self.config.max_time)
            st.time = st.window_start
            st.window_time_accumulated = 0.0
            st.iteration = 1
            st.last_window_converged = decision["converged"]
            st.window_complete = True
            if st.time >= self.config.max_time - TIME_EPS:
                st.ongoing = False
                st.time = self.config.max_time
                return 0.0
            st.window_size = min(self.config.time_window_size, self.config.max_time - st.time)
            if self.implicit:
                st.pending_actions.add(Action.WRITE_ITERATION_CHECKPOINT)
            if not self.is_first and self._first_sends():
                self._read = self._recv_field()
            return st.window_size

        st.iteration += 1
        st.time = st.window_start
        st.window_time_accumulated = 0.0
        st.pending_actions.add(Action.READ_ITERATION_CHECKPOINT)
        if not self.is_first and self._first_sends():
            self._read = self._recv_field()
        return st.window_size

    def _exchange_first(self) -> dict:
        if self.write_exchange is not None:
            self._send_field(self._outgoing())
        decision = self._recv_control()
        if self.read_exchange is not None:
            self._read = self._recv_field()
        return decision

    def _exchange_second(self, window_end: float) -> dict:
        st = self.state
        if self.read_exchange is not None:
            residual = residual_norm(self._previous_read, self._read)
        else:
            residual = 0.0
        if not self.implicit:
            conv, advance = True, True
        else:
            conv = residual <= self.config.convergence_tolerance
            advance = conv or st.iteration >= self.config.max_iterations
            if advance and not conv:
                log.warning("window %d not converged after %d iterations (residual %.3e); continuing",
                            st.window_index + 1, st.iteration, residual)

        outgoing = self._outgoing()
        if self.acceleration is not None and not advance:
            relaxed = self.acceleration.accelerate(self._last_sent.values, outgoing.values)
            outgoing = outgoing.with_values(relaxed)
        if self.acceleration is not None and advance:
            self.acceleration.reset()

        decision = {"window": st.window_index + 1, "iteration": st.iteration, "time": window_end,
                    "residual": residual, "converged": conv, "advance": advance}
        self._send_control(decision)
        if self.write_exchange is not None:
            self._send_field(outgoing)
        self._last_sent = outgoing
        self._previous_read = self._read
        return decision

    def _outgoing(self) -> DataField:
        if self._write is None:
            self._write = field_zeros(self.mesh, self._write_kind, self.write_exchange.data)
        return self._write

    def _first_sends(self) -> bool:
        return self.config.exchange_from(self.config.first_participant) is not None

    # -- queries -----------------------------------------------------------------

    def is_coupling_ongoing(self) -> bool:
        return self.state.ongoing

    def is_time_window_complete(self) -> bool:
        return self.state.window_complete

    def is_action_required(self, action: Action) -> bool:
        return Action(action) in self.state.pending_actions

    def mark_action_fulfilled(self, action: Action) -> None:
        action = Action(action)
        if action not in self.state.pending_actions:
            raise ActionNotPending(f"{action.value} is not pending")
        self.state.pending_actions.discard(action)

    # -- wire helpers --------------------------------------------------------------

    def _require_init(self):
        if not self._initialized:
            raise NotInitialized("initialize() has not been called")

    def _send_control(self, doc: dict) -> None:
        self.channel.send_message(comm.Message(comm.MessageKind.CONTROL, comm.encode_control(doc)))

    def _recv_control(self) -> dict:
        return comm.decode_control(self.channel.expect(comm.MessageKind.CONTROL).payload)

    def _send_field(self, field: DataField) -> None:
        self.channel.send_message(comm.Message(comm.MessageKind.FIELD, comm.encode_field(field)))

    def _recv_field(self) -> DataField:
        raw = comm.decode_field(self.channel.expect(comm.MessageKind.FIELD).payload, self.peer_mesh)
        if self._plan is None:
            return field_zeros(self.mesh, raw.kind, raw.name)
        return apply_mapping(self._plan, raw, self.mesh)
