"""Two coupling kernels on threads, driven by scripted scalar "solvers"."""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from partcouple import comm
from partcouple.config import CouplingConfig
from partcouple.interface import Action
from partcouple.kernel import CouplingKernel
from partcouple.meshdata import DataField, Kind, build_edge_mesh


def config(scheme="serial-implicit", window=1.0, max_time=2.0, tol=1e-10, max_iterations=50,
           acceleration=None, exchanges=None, **extra) -> CouplingConfig:
    doc = {
        "scheme": scheme,
        "participants": ["A", "B"],
        "time_window_size": window,
        "max_time": max_time,
        "max_iterations": max_iterations,
        "convergence_tolerance": tol,
        "acceleration": acceleration or {"kind": "constant", "omega": 1.0},
        "exchanges": exchanges or [
            {"data": "X", "from": "A", "to": "B", "mapping": "consistent"},
            {"data": "Y", "from": "B", "to": "A", "mapping": "consistent"},
        ],
    }
    doc.update(extra)
    return CouplingConfig.from_json(doc)


@dataclass
class Log:
    returned: list = field(default_factory=list)  # max_dt after each advance
    dts: list = field(default_factory=list)
    reads: list = field(default_factory=list)
    writes: list = field(default_factory=list)
    initial_dt: float = 0.0
    actions_seen: int = 0
    first_read: np.ndarray | None = None
    kernel: CouplingKernel | None = None


def solver_loop(kernel, channel, mesh, solve, solver_dt=None, dt_pattern=None, initial=None, log=None):
    """The solver loop: checkpoint, read, solve, write, advance, maybe roll back.

    ``solve(read_values, state) -> write_values``; ``state`` is the number of
    completed steps (rolled back with the checkpoint).
    """
    log = log or Log()
    log.kernel = kernel
    init_field = None if initial is None else DataField("init", Kind.SCALAR, mesh, np.full(len(mesh), initial))
    dt_max = kernel.initialize(mesh, initial_data=init_field, channel=channel)
    log.initial_dt = dt_max
    log.first_read = kernel.read_data().values.copy()
    state, checkpoint, step = 0, 0, 0
    while kernel.is_coupling_ongoing():
        if kernel.is_action_required(Action.WRITE_ITERATION_CHECKPOINT):
            checkpoint = state
            log.actions_seen += 1
            kernel.mark_action_fulfilled(Action.WRITE_ITERATION_CHECKPOINT)
        read = kernel.read_data().values.copy()
        log.reads.append(read)
        wanted = dt_pattern[step % len(dt_pattern)] if dt_pattern else solver_dt
        step += 1
        dt = min(wanted, dt_max)
        out = np.asarray(solve(read, state), dtype=float)
        log.writes.append(out.tobytes())
        kernel.write_data(DataField("w", Kind.SCALAR, mesh, out))
        log.dts.append(dt)
        dt_max = kernel.advance(dt)
        log.returned.append(dt_max)
        if kernel.is_action_required(Action.READ_ITERATION_CHECKPOINT):
            state = checkpoint
            log.actions_seen += 1
            kernel.mark_action_fulfilled(Action.READ_ITERATION_CHECKPOINT)
        else:
            state += 1
    return log


def run_pair(cfg, first: dict, second: dict, timeout=30.0):
    """Run participants "A" and "B"; each dict holds ``solver_loop`` keyword arguments."""
    a, b = comm.inprocess_pair(timeout=timeout)
    logs, errors = {}, {}

    def worker(name, ch, kw):
        kw = dict(kw)
        mesh = kw.pop("mesh", None) or build_edge_mesh(name + "Mesh", (1, 0), (1, 1), 4)
        try:
            logs[name] = solver_loop(CouplingKernel(cfg, name), ch, mesh, **kw)
        except Exception as exc:
            errors[name] = exc
            ch.close()

    threads = [threading.Thread(target=worker, args=("A", a, first)),
               threading.Thread(target=worker, args=("B", b, second))]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout)
    assert not any(t.is_alive() for t in threads), "participants deadlocked"
    return logs, errors


def affine(gain, offset):
    return lambda read, state: gain * read + offset
