"""The coupling-kernel API the adapter talks to.

:class:`partcouple.kernel.CouplingKernel` implements it over a channel;
:class:`partcouple.mockkernel.MockKernel` implements it from canned values.
This module deliberately imports nothing from the transport layer.
"""

from __future__ import annotations

import enum
from abc import ABC, abstractmethod

from .meshdata import CouplingMesh, DataField, Kind


class Action(enum.Enum):
    WRITE_ITERATION_CHECKPOINT = "write-iteration-checkpoint"
    READ_ITERATION_CHECKPOINT = "read-iteration-checkpoint"


class CouplingInterface(ABC):
    @abstractmethod
    def initialize(self, mesh: CouplingMesh, *, read_kind: Kind | None = None, write_kind: Kind | None = None,
                   initial_data: DataField | None = None, channel=None) -> float:
        """Register the coupling mesh, exchange initial data, return the max timestep."""

    @abstractmethod
    def write_data(self, field: DataField) -> None:
        """Buffer ``field`` for the next completed time window."""

    @abstractmethod
    def read_data(self) -> DataField:
        """Latest received (and mapped) data on the own mesh."""

    @abstractmethod
    def initial_read_data(self) -> DataField:
        """Data the peer supplied at initialization, i.e. the read values at t = 0."""

    @abstractmethod
    def advance(self, dt: float) -> float:
        """Advance by ``dt``; return the maximum size of the next step."""

    @abstractmethod
    def is_coupling_ongoing(self) -> bool: ...

    @abstractmethod
    def is_time_window_complete(self) -> bool: ...

    @abstractmethod
    def is_action_required(self, action: Action) -> bool: ...

    @abstractmethod
    def mark_action_fulfilled(self, action: Action) -> None: ...


KERNEL_OPERATIONS = (
    "initialize",
    "write_data",
    "read_data",
    "initial_read_data",
    "advance",
    "is_coupling_ongoing",
    "is_time_window_complete",
    "is_action_required",
    "mark_action_fulfilled",
)
