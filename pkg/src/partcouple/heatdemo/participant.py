"""Partitioned heat conduction: one participant per role, plus a monolithic reference."""

from __future__ import annotations

import csv
import json
import threading
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import comm
from ..adapter import Adapter, Function, FunctionSpace
from ..config import AdapterConfig, CouplingConfig
from ..errors import PeerClosed
from .problem import HeatProblem, HeatSolver, HeatState, Role, errors, extract_flux, initial_state, manufactured

EDGE_TOL = 1e-12


@dataclass
class RunReport:
    role: str
    participant: str
    linf: float
    l2: float
    final_time: float
    iterations_per_window: list = field(default_factory=list)
    trace: list = field(default_factory=list)  # (window, iteration, time, residual, converged)
    error_history: list = field(default_factory=list)  # (t, linf, l2)
    solution: np.ndarray | None = field(default=None, repr=False)
    config: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        doc = asdict(self)
        doc.pop("solution")
        doc["trace"] = [list(r) for r in self.trace]
        doc["error_history"] = [list(r) for r in self.error_history]
        return doc

    def trace_csv(self) -> str:
        lines = ["window,iteration,time,residual,converged"]
        lines += [f"{w},{i},{t!r},{r!r},{str(c).lower()}" for w, i, t, r, c in self.trace]
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n")
        (out / "trace.csv").write_text(self.trace_csv())
        with open(out / "error.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "linf", "l2"])
            w.writerows([repr(t), repr(a), repr(b)] for t, a, b in self.error_history)


def problem_from_config(role, coupling: CouplingConfig | None = None, nx: int = 10, ny: int = 10,
                        dt_solver: float | None = None) -> HeatProblem:
    """Manufactured-solution parameters come from the coupling config's metadata so peers share them."""
    meta = coupling.metadata if coupling is not None else {}
    kw = {}
    if "alpha_ms" in meta:
        kw["alpha_ms"] = float(meta["alpha_ms"])
    if "beta_ms" in meta:
        kw["beta_ms"] = float(meta["beta_ms"])
    if dt_solver is None:
        dt_solver = coupling.time_window_size if coupling is not None else 0.1
    return HeatProblem.for_role(role, nx=nx, ny=ny, dt_solver=dt_solver, **kw)


def _edge_sampler(ys: np.ndarray, values: np.ndarray):
    # exact at the edge nodes, piecewise linear in between
    return lambda x, y: float(np.interp(y, ys, values))


def run_participant(role, adapter_config, problem: HeatProblem, channel, coupling_config=None,
                    out_dir=None) -> RunReport:
    """Run one coupled participant to the end of the coupling.

    ``role`` "dirichlet" reads temperature and writes ``du/dx`` on the
    coupling edge; "neumann" reads ``du/dx`` and writes temperature.
    """
    role = Role(role)
    if role is Role.MONOLITHIC:
        return run_monolithic(problem, out_dir=out_dir)
    adapter = Adapter(adapter_config, coupling_config=coupling_config)
    solver = HeatSolver(problem)
    xc = problem.coupling_x
    ys = problem.y
    col = problem.coupling_column

    def on_edge(x, y):
        return abs(x - xc) < EDGE_TOL

    space = FunctionSpace(problem.points)
    if role is Role.DIRICHLET:
        initial = Function(space, lambda x, y: manufactured(x, y, 0.0, problem.alpha_ms, problem.beta_ms)[2])
    else:
        initial = Function(space, lambda x, y: manufactured(x, y, 0.0, problem.alpha_ms, problem.beta_ms)[0])

    dt_max = adapter.initialize(on_edge, read_function_space=space, write_object=initial, channel=channel)
    expr = adapter.create_coupling_expression()
    state = initial_state(problem)

    # read data is interpolated linearly in time across each window
    window_start_data = adapter.read_initial_data()
    window_t0 = state.t
    window_len = dt_max
    history = []

    while adapter.is_coupling_ongoing():
        if adapter.is_action_required(adapter.action_write_iteration_checkpoint()):
            adapter.store_checkpoint(state.u, state.t, state.n)

        end_data = adapter.read_data()
        dt = min(problem.dt_solver, dt_max)
        t_new = state.t + dt
        if t_new >= window_t0 + window_len - EDGE_TOL:
            boundary = end_data
        else:
            w = (t_new - window_t0) / window_len
            boundary = {k: (1.0 - w) * window_start_data[k] + w * v for k, v in end_data.items()}
        adapter.update_coupling_expression(expr, boundary)
        coupling_values = np.asarray(expr(np.full_like(ys, xc), ys), dtype=float)

        new = solver.step(state, dt, coupling_values)
        if role is Role.DIRICHLET:
            adapter.write_data(_edge_sampler(ys, extract_flux(problem, new, xc).values))
        else:
            adapter.write_data(_edge_sampler(ys, new.u[:, col].copy()))
        dt_max = adapter.advance(dt)

        if adapter.is_action_required(adapter.action_read_iteration_checkpoint()):
            u, t, n = adapter.retrieve_checkpoint()
            state = HeatState(u, t, n)
        else:
            state = new
            if adapter.is_time_window_complete():
                window_start_data = end_data
                window_t0 = state.t
                window_len = dt_max
                history.append((state.t, *errors(problem, state)))

    linf, l2 = errors(problem, state)
    trace = [(e.window, e.iteration, e.time, e.residual, e.converged) for e in adapter.coupling_trace]
    iters = {}
    for w, i, *_ in trace:
        iters[w] = max(iters.get(w, 0), i)
    report = RunReport(role.value, adapter.config.participant_name, linf, l2, state.t,
                       [iters[w] for w in sorted(iters)], trace, history, state.u.copy(),
                       adapter.config.coupling.to_json())
    if out_dir is not None:
        report.write(out_dir)
    return report


def run_monolithic(problem: HeatProblem, max_time: float = 1.0, out_dir=None) -> RunReport:
    """Single-domain reference run with manufactured Dirichlet data on the whole boundary."""
    if problem.role is not Role.MONOLITHIC:
        problem = problem.with_(role=Role.MONOLITHIC)
    solver = HeatSolver(problem)
    state = initial_state(problem)
    history = []
    while state.t < max_time - EDGE_TOL:
        dt = min(problem.dt_solver, max_time - state.t)
        state = solver.step(state, dt)
        history.append((state.t, *errors(problem, state)))
    linf, l2 = errors(problem, state)
    report = RunReport(Role.MONOLITHIC.value, "Monolithic", linf, l2, state.t, [], [], history, state.u.copy())
    if out_dir is not None:
        report.write(out_dir)
    return report


# -- configs and two-participant harness --------------------------------------------

DIRICHLET_NAME = "Dirichlet"
NEUMANN_NAME = "Neumann"


def coupling_config_doc(scheme="serial-implicit", window=0.1, max_time=1.0, tol=1e-12, max_iterations=100,
                        acceleration=None, first=DIRICHLET_NAME, alpha_ms=3.0, beta_ms=1.2) -> dict:
    second = NEUMANN_NAME if first == DIRICHLET_NAME else DIRICHLET_NAME
    return {
        "scheme": scheme,
        "participants": [first, second],
        "time_window_size": window,
        "max_time": max_time,
        "max_iterations": max_iterations,
        "convergence_tolerance": tol,
        "acceleration": acceleration or {"kind": "aitken", "omega": 0.5, "omega_min": 1e-3, "omega_max": 1.0},
        "exchanges": [
            {"data": "HeatFlux", "from": DIRICHLET_NAME, "to": NEUMANN_NAME, "mapping": "consistent"},
            {"data": "Temperature", "from": NEUMANN_NAME, "to": DIRICHLET_NAME, "mapping": "consistent"},
        ],
        "metadata": {"alpha_ms": alpha_ms, "beta_ms": beta_ms},
    }


def adapter_config_doc(role, config_file_name="coupling-config.json") -> dict:
    role = Role(role)
    if role is Role.DIRICHLET:
        return {"participant_name": DIRICHLET_NAME, "config_file_name": config_file_name,
                "interface": {"coupling_mesh_name": "DirichletMesh", "write_data_name": "HeatFlux",
                              "read_data_name": "Temperature"}}
    return {"participant_name": NEUMANN_NAME, "config_file_name": config_file_name,
            "interface": {"coupling_mesh_name": "NeumannMesh", "write_data_name": "Temperature",
                          "read_data_name": "HeatFlux"}}


def write_case(directory, **coupling_kw) -> dict:
    """Write a coupling config and both adapter configs; return their paths."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / "coupling-config.json").write_text(json.dumps(coupling_config_doc(**coupling_kw), indent=2))
    paths = {"coupling": d / "coupling-config.json"}
    for role in (Role.DIRICHLET, Role.NEUMANN):
        p = d / f"{role.value}-adapter-config.json"
        p.write_text(json.dumps(adapter_config_doc(role), indent=2))
        paths[role.value] = p
    return paths


def run_coupled(case: dict, transport: str = "inprocess", nx: int = 10, ny: int = 10, dt_solver=None,
                problems: dict | None = None, out_dir=None, timeout: float = 60.0,
                coupling: CouplingConfig | None = None) -> dict:
    """Run both participants on two threads; return ``{"dirichlet": report, "neumann": report}``.

    ``case`` maps each role to its adapter config path; the coupling config is
    ``coupling`` if given, else ``case["coupling"]``, else the one the adapter
    configs name.
    """
    roles = ("dirichlet", "neumann")
    if coupling is None and "coupling" in case:
        coupling = CouplingConfig.load(case["coupling"])
    adapters = {r: AdapterConfig.load(case[r], coupling) for r in roles}
    coupling = adapters["dirichlet"].coupling
    problems = problems or {r: problem_from_config(r, coupling, nx, ny, dt_solver) for r in roles}
    first = next(r for r in roles if adapters[r].participant_name == coupling.first_participant)
    second = roles[1] if first == roles[0] else roles[0]

    if transport == "inprocess":
        a, b = comm.inprocess_pair(timeout=timeout)
        connectors = {first: lambda: a, second: lambda: b}
    elif transport == "tcp":
        listener = comm.TcpListener("127.0.0.1", 0)
        connectors = {
            first: lambda: listener.accept(timeout),
            second: lambda: comm.connect(comm.Tcp("127.0.0.1", listener.port, "initiator", timeout)),
        }
    else:
        raise ValueError(f"unknown transport {transport!r}")

    results, failures = {}, {}

    def worker(role):
        ch = None
        try:
            ch = connectors[role]()
            sub = None if out_dir is None else Path(out_dir) / role
            results[role] = run_participant(role, case[role], problems[role], ch, coupling_config=coupling, out_dir=sub)
        except BaseException as exc:  # re-raised in the calling thread
            failures[role] = exc
        finally:
            if ch is not None:
                ch.close()

    threads = [threading.Thread(target=worker, args=(r,), daemon=True) for r in roles]
    try:
        for t in threads:
            t.start()
        for t in threads:
            t.join(timeout)
    finally:
        if transport == "tcp":
            listener.close()
    if any(t.is_alive() for t in threads):
        raise TimeoutError("coupled run did not finish in time")
    if failures:
        # a peer's PeerClosed is a consequence; report the original failure
        primary = [e for e in failures.values() if not isinstance(e, PeerClosed)]
        raise (primary or list(failures.values()))[0]
    return results
