"""Heat demo: solver exactness, coupled runs, report files and the command line."""

import json
import socket
import subprocess
import sys
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from partcouple.errors import EdgeNotOnBoundary
from partcouple.heatdemo.cli import main
from partcouple.heatdemo.participant import run_coupled, run_monolithic, write_case
from partcouple.heatdemo.problem import (
    HeatProblem,
    HeatSolver,
    HeatState,
    errors,
    extract_flux,
    initial_state,
    manufactured,
    step_heat,
)

ALPHA, BETA = 3.0, 1.2


def laplacian_fd(fun, x, y, h=1e-3):
    return (fun(x + h, y) - 2 * fun(x, y) + fun(x - h, y) + fun(x, y + h) - 2 * fun(x, y) + fun(x, y - h)) / h**2


# -- manufactured solution -------------------------------------------------------------

def test_manufactured_values():
    u, f, q = manufactured(0.0, 0.0, 0.0)
    assert (u, f, q) == (1.0, -6.8, 0.0)
    assert manufactured(1.0, 0.5, 1.0)[2] == 2.0
    u, _, _ = manufactured(1.0, 0.5, 1.0)
    assert u == pytest.approx(1 + 1 + 0.75 + 1.2, abs=1e-15)


def test_manufactured_satisfies_pde():
    rng = np.random.default_rng(7)
    x, y, t = rng.uniform(0, 2, 100), rng.uniform(0, 1, 100), rng.uniform(0, 1, 100)
    u_t = (manufactured(x, y, t + 1e-3)[0] - manufactured(x, y, t - 1e-3)[0]) / 2e-3
    lap = laplacian_fd(lambda a, b: manufactured(a, b, t)[0], x, y)
    f = manufactured(x, y, t)[1]
    np.testing.assert_allclose(u_t, lap + f, atol=1e-5)


# -- single-domain solver --------------------------------------------------------------------

def test_uncoupled_step_is_exact():
    p = HeatProblem.for_role("monolithic")
    state = initial_state(p)
    for _ in range(5):
        state = step_heat(p, state, 0.1)
    assert errors(p, state)[0] <= 1e-10


def test_zero_source_reaches_steady_state():
    # beta = 0 with alpha = -1 makes u = 1 + x^2 - y^2 harmonic and time independent
    p = HeatProblem.for_role("monolithic", alpha_ms=-1.0, beta_ms=0.0)
    assert manufactured(0.3, 0.4, 0.0, -1.0, 0.0)[1] == 0.0
    noisy = HeatState(p.exact(0.0) + np.pad(np.full((p.ny - 1, p.nx - 1), 0.5), 1), 0.0)
    solver = HeatSolver(p)
    for _ in range(200):
        noisy = solver.step(noisy, 0.5)
    assert errors(p, noisy)[0] <= 1e-10


def test_two_half_steps_match_exact_solution():
    p = HeatProblem.for_role("monolithic")
    solver = HeatSolver(p)
    half = solver.step(solver.step(initial_state(p), 0.05), 0.05)
    full = solver.step(initial_state(p), 0.1)
    np.testing.assert_allclose(half.u, full.u, rtol=0, atol=1e-12)


@pytest.mark.parametrize("role", ["dirichlet", "neumann"])
def test_coupled_role_step_with_exact_edge_data(role):
    p = HeatProblem.for_role(role)
    x = p.coupling_x
    state = initial_state(p)
    for k in range(1, 4):
        t = 0.1 * k
        u, _, q = manufactured(np.full(p.ny + 1, x), p.y, t)
        state = step_heat(p, state, 0.1, u if role == "dirichlet" else q)
    assert errors(p, state)[0] <= 1e-10


def test_extract_flux():
    p = HeatProblem.for_role("dirichlet")
    state = initial_state(p)
    np.testing.assert_allclose(extract_flux(p, state).values, 2.0, atol=1e-12)
    np.testing.assert_allclose(extract_flux(p, state, x=0.0).values, 0.0, atol=1e-12)
    linear = HeatState(np.tile(p.x, (p.ny + 1, 1)), 0.0)  # u = x
    np.testing.assert_allclose(extract_flux(p, linear).values, 1.0, atol=1e-12)
    with pytest.raises(EdgeNotOnBoundary):
        extract_flux(p, state, x=0.5)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5), c=st.floats(-5, 5))
def test_extract_flux_exact_on_quadratics(a, b, c):
    p = HeatProblem.for_role("neumann")
    xx, _ = np.meshgrid(p.x, p.y)
    state = HeatState(a * xx**2 + b * xx + c, 0.0)
    expected = 2 * a * p.x_lo + b
    np.testing.assert_allclose(extract_flux(p, state).values, expected, atol=1e-9 * (1 + abs(a) + abs(b) + abs(c)))


# -- coupled runs -------------------------------------------------------------------------------

def coupled(tmp_path, transport="inprocess", dt_solver=None, out=None, **kw):
    case = write_case(tmp_path / "case", **kw)
    return run_coupled(case, transport, dt_solver=dt_solver, out_dir=out)


def test_implicit_run_is_exact(tmp_path):
    reports = coupled(tmp_path)
    for rep in reports.values():
        assert rep.final_time == pytest.approx(1.0, abs=1e-12)
        assert rep.linf <= 1e-9
    assert len(reports["dirichlet"].iterations_per_window) == 10


def test_error_follows_tolerance(tmp_path):
    errs = []
    for tol in (1e-3, 1e-6, 1e-9):
        rep = coupled(tmp_path / str(tol), tol=tol)["dirichlet"]
        errs.append(rep.linf)
        assert rep.linf <= 10 * tol
    assert errs[0] > errs[1] > errs[2]


def test_explicit_worse_than_implicit(tmp_path):
    implicit = coupled(tmp_path / "i")["dirichlet"]
    explicit = coupled(tmp_path / "e", scheme="serial-explicit")["dirichlet"]
    assert explicit.linf > 1e-3 > implicit.linf
    assert set(explicit.iterations_per_window) == {1}


def test_monolithic_reference_and_crosscheck(tmp_path):
    mono = run_monolithic(HeatProblem.for_role("monolithic"))
    assert mono.linf <= 1e-10
    reps = coupled(tmp_path)
    nx = 10
    np.testing.assert_allclose(reps["dirichlet"].solution, mono.solution[:, : nx + 1], rtol=0, atol=1e-9)
    np.testing.assert_allclose(reps["neumann"].solution, mono.solution[:, nx:], rtol=0, atol=1e-9)


def test_reruns_write_identical_reports(tmp_path):
    for name in ("a", "b"):
        coupled(tmp_path / name, out=tmp_path / name / "out")
    for role in ("dirichlet", "neumann"):
        for f in ("trace.csv", "error.csv"):
            assert (tmp_path / "a/out" / role / f).read_bytes() == (tmp_path / "b/out" / role / f).read_bytes()
        doc = json.loads((tmp_path / "a/out" / role / "report.json").read_text())
        assert doc["participant"] in ("Dirichlet", "Neumann") and "solution" not in doc


def test_participants_agree_on_trace(tmp_path):
    reps = coupled(tmp_path, tol=1e-6)
    assert reps["dirichlet"].trace == reps["neumann"].trace
    header = reps["dirichlet"].trace_csv().splitlines()[0]
    assert header == "window,iteration,time,residual,converged"


@pytest.mark.parametrize("divisor", [1, 2, 5])
def test_subcycling(tmp_path, divisor):
    reps = coupled(tmp_path, dt_solver=0.1 / divisor)
    for rep in reps.values():
        assert rep.linf <= 1e-9
        assert len(rep.error_history) == 10


def test_neumann_first(tmp_path):
    reps = coupled(tmp_path, first="Neumann")
    assert all(rep.linf <= 1e-9 for rep in reps.values())


def test_tcp_matches_inprocess(tmp_path):
    a = coupled(tmp_path / "a")
    b = coupled(tmp_path / "b", transport="tcp")
    for role in a:
        assert a[role].solution.tobytes() == b[role].solution.tobytes()
        assert a[role].trace == b[role].trace


# -- command line -------------------------------------------------------------------------------

def test_cli_monolithic(tmp_path, capsys):
    assert main(["--role", "monolithic", "--out-dir", str(tmp_path)]) == 0
    assert "linf=" in capsys.readouterr().out
    assert {p.name for p in tmp_path.iterdir()} >= {"report.json", "error.csv"}


def test_cli_inprocess(tmp_path, capsys):
    case = write_case(tmp_path / "case")
    rc = main(["--role", "dirichlet", "--transport", "inprocess", "--adapter-config", str(case["dirichlet"]),
               "--peer-adapter-config", str(case["neumann"]), "--out-dir", str(tmp_path / "out")])
    assert rc == 0
    out = capsys.readouterr().out
    assert out.count("linf=") == 2
    for role in ("dirichlet", "neumann"):
        assert (tmp_path / "out" / role / "trace.csv").exists()


def test_cli_usage_errors(tmp_path, capsys):
    assert main(["--role", "neumann"]) == 2
    assert main(["--role", "neumann", "--adapter-config", str(tmp_path / "missing.json")]) == 1
    assert "ConfigNotFound" in capsys.readouterr().err


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def test_cli_tcp_two_processes(tmp_path):
    case = write_case(tmp_path / "case")
    endpoint = f"127.0.0.1:{free_port()}"
    procs = []
    for role in ("dirichlet", "neumann"):
        cmd = [sys.executable, "-m", "partcouple.heatdemo", "--role", role, "--adapter-config", str(case[role]),
               "--endpoint", endpoint, "--out-dir", str(tmp_path / role), "--timeout", "30"]
        procs.append(subprocess.Popen(cmd, stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True))
        time.sleep(0.2)
    outs = [p.communicate(timeout=60) for p in procs]
    assert [p.returncode for p in procs] == [0, 0], outs
    for role in ("dirichlet", "neumann"):
        rep = json.loads((tmp_path / role / "report.json").read_text())
        assert rep["linf"] <= 1e-9
