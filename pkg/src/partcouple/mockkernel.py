"""Canned-value stand-in for the coupling kernel, for testing the adapter alone.

Every call is recorded as a deep-copied argument snapshot. Operations that
return a value pop it from a queue set with :meth:`MockKernel.set_return`;
an empty queue raises :class:`QueueExhausted` instead of inventing a default.
"""

from __future__ import annotations

import copy
import dataclasses
from collections import deque
from dataclasses import dataclass
from types import MappingProxyType
from typing import Any

import numpy as np

from .errors import QueueExhausted, UnknownOperation
from .interface import KERNEL_OPERATIONS, CouplingInterface

VOID_OPERATIONS = frozenset({"write_data", "mark_action_fulfilled"})


def _freeze(obj):
    """Make a deep copy read-only in place: arrays lose write access, containers become immutable."""
    if isinstance(obj, np.ndarray):
        obj.setflags(write=False)
        return obj
    if isinstance(obj, (list, tuple)):
        return tuple(_freeze(v) for v in obj)
    if isinstance(obj, dict):
        return MappingProxyType({k: _freeze(v) for k, v in obj.items()})
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        for f in dataclasses.fields(obj):
            object.__setattr__(obj, f.name, _freeze(getattr(obj, f.name)))
    return obj


def _snapshot(value):
    try:
        return _freeze(copy.deepcopy(value))
    except (TypeError, copy.Error):
        # live resources (sockets, locks) cannot be copied; keep the reference
        return value


@dataclass(frozen=True)
class CallRecord:
    args: tuple
    kwargs: tuple  # sorted (name, value) pairs

    def __getitem__(self, i):
        return self.args[i]

    @property
    def kw(self) -> dict:
        return dict(self.kwargs)


class MockKernel(CouplingInterface):
    def __init__(self):
        self._returns: dict[str, deque] = {op: deque() for op in KERNEL_OPERATIONS}
        self._calls: dict[str, list[CallRecord]] = {op: [] for op in KERNEL_OPERATIONS}
        self.call_order: list[str] = []

    @staticmethod
    def _check(operation: str) -> None:
        if operation not in KERNEL_OPERATIONS:
            raise UnknownOperation(f"{operation!r} is not a kernel operation")

    def set_return(self, operation: str, values) -> None:
        """Queue return values for ``operation`` (consumed first-in, first-out)."""
        self._check(operation)
        self._returns[operation].extend(values)

    def recorded_args(self, operation: str) -> list[CallRecord]:
        self._check(operation)
        return list(self._calls[operation])

    def _call(self, operation: str, *args, **kwargs) -> Any:
        snap_args = tuple(_snapshot(a) for a in args)
        snap_kwargs = tuple((k, _snapshot(v)) for k, v in sorted(kwargs.items()))
        rec = CallRecord(snap_args, snap_kwargs)
        self._calls[operation].append(rec)
        self.call_order.append(operation)
        if operation in VOID_OPERATIONS:
            return None
        queue = self._returns[operation]
        if not queue:
            raise QueueExhausted(f"no canned return value left for {operation!r}")
        return queue.popleft()

    def initialize(self, mesh, *, read_kind=None, write_kind=None, initial_data=None, channel=None):
        return self._call("initialize", mesh, read_kind=read_kind, write_kind=write_kind,
                          initial_data=initial_data, channel=channel)

    def write_data(self, field):
        return self._call("write_data", field)

    def read_data(self):
        return self._call("read_data")

    def initial_read_data(self):
        return self._call("initial_read_data")

    def advance(self, dt):
        return self._call("advance", dt)

    def is_coupling_ongoing(self):
        return self._call("is_coupling_ongoing")

    def is_time_window_complete(self):
        return self._call("is_time_window_complete")

    def is_action_required(self, action):
        return self._call("is_action_required", action)

    def mark_action_fulfilled(self, action):
        return self._call("mark_action_fulfilled", action)
