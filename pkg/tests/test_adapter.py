"""Adapter unit tests against MockKernel: no channel, no peer, no coupling kernel."""

import json
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from partcouple.adapter import (
    Adapter,
    CouplingExpression,
    Function,
    FunctionSpace,
    LogicalPartition,
    synchronize_ghosts,
)
from partcouple.errors import (
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
from partcouple.interface import Action
from partcouple.meshdata import Kind
from partcouple.mockkernel import MockKernel

REFERENCE_ADAPTER = {
    "participant_name": "FEniCS",
    "config_file_name": "precice-config.json",
    "interface": {
        "coupling_mesh_name": "FEniCSMesh",
        "write_data_name": "HeatFlux",
        "read_data_name": "Temperature",
    },
}

COUPLING = {
    "scheme": "serial-implicit",
    "participants": ["FEniCS", "Other"],
    "time_window_size": 0.1,
    "max_time": 1.0,
    "exchanges": [
        {"data": "HeatFlux", "from": "FEniCS", "to": "Other"},
        {"data": "Temperature", "from": "Other", "to": "FEniCS"},
    ],
}


@pytest.fixture
def config_path(tmp_path):
    (tmp_path / "precice-config.json").write_text(json.dumps(COUPLING))
    path = tmp_path / "precice-adapter-config.json"
    path.write_text(json.dumps(REFERENCE_ADAPTER))
    return path


def unit_square(n=11, owners=None, kind=Kind.SCALAR):
    xs = np.linspace(0, 1, n)
    xx, yy = np.meshgrid(xs, xs)
    return FunctionSpace(np.column_stack([xx.ravel(), yy.ravel()]), kind, owners)


def right_edge(x, y):
    return abs(x - 1.0) < 1e-12


def make_adapter(config_path, space=None, write=None, window=0.1, **init):
    mock = MockKernel()
    mock.set_return("initialize", [window])
    adapter = Adapter(config_path, kernel=mock)
    space = space if space is not None else unit_square()
    write = write if write is not None else space
    adapter.initialize(right_edge, read_function_space=space, write_object=write, **init)
    return adapter, mock


def edge_points(n=11):
    return [(1.0, float(y)) for y in np.linspace(0, 1, n)]


# -- construction and initialization ------------------------------------------------

def test_reference_adapter_config(config_path):
    adapter = Adapter(config_path, kernel=MockKernel())
    assert adapter.config.participant_name == "FEniCS"
    assert adapter.config.coupling_mesh_name == "FEniCSMesh"


def test_initialize_filters_boundary(config_path):
    mock = MockKernel()
    mock.set_return("initialize", [0.1])
    adapter = Adapter(config_path, kernel=mock)
    assert adapter.initialize(right_edge, read_function_space=unit_square(), write_object=unit_square()) == 0.1
    (call,) = mock.recorded_args("initialize")
    mesh = call[0]
    assert len(mesh) == 11 and mesh.name == "FEniCSMesh"
    np.testing.assert_array_equal(mesh.points, edge_points())
    assert call.kw["initial_data"] is None and call.kw["channel"] is None
    assert call.kw["read_kind"] is Kind.SCALAR


def test_initialize_with_initial_function(config_path):
    space = unit_square()
    adapter, mock = make_adapter(config_path, space, Function(space, lambda x, y: 310.0))
    init = mock.recorded_args("initialize")[0].kw["initial_data"]
    np.testing.assert_array_equal(init.values, np.full(11, 310.0))
    assert init.name == "HeatFlux"


def test_initialize_errors(config_path):
    adapter = Adapter(config_path, kernel=MockKernel())
    with pytest.raises(NeitherReadNorWrite):
        adapter.initialize(right_edge)
    with pytest.raises(EmptyCouplingBoundary):
        adapter.initialize(lambda x, y: x > 5, read_function_space=unit_square())
    with pytest.raises(NotInitialized):
        adapter.read_data()


# -- read / write --------------------------------------------------------------------

def test_read_data_returns_canned_ramp(config_path):
    adapter, mock = make_adapter(config_path)
    dummy_data = np.arange(11.0)
    mock.set_return("read_data", [dummy_data])
    read = adapter.read_data()
    assert read == dict(zip(edge_points(), dummy_data.tolist()))
    assert mock.recorded_args("read_data")[0].args == ()


def test_read_data_per_partition(config_path):
    owners = np.zeros(121, dtype=int)
    owners[np.arange(121) // 11 >= 6] = 1  # rows y >= 0.6 belong to partition 1
    adapter, mock = make_adapter(config_path, unit_square(owners=owners))
    mock.set_return("read_data", [np.arange(11.0)] * 3)
    p0, p1 = adapter.read_data(partition=0), adapter.read_data(partition=1)
    assert set(p0) | set(p1) == set(edge_points()) and not set(p0) & set(p1)
    assert len(p0) == 6 and len(p1) == 5
    assert adapter.read_data(partition=7) == {}


def test_write_data_samples_flux(config_path):
    adapter, mock = make_adapter(config_path)
    adapter.write_data(lambda x, y: 2 * x)
    (call,) = mock.recorded_args("write_data")
    np.testing.assert_array_equal(call[0].values, [2.0] * 11)
    assert call[0].name == "HeatFlux"


def test_write_data_three_vertices(config_path):
    xs = np.array([0.0, 0.5, 1.0])
    space = FunctionSpace(np.array([[1.0, 0.0], [1.0, 0.5], [1.0, 1.0]]))
    adapter, mock = make_adapter(config_path, space)
    adapter.write_data(lambda x, y: 2 * x + y)
    np.testing.assert_array_equal(mock.recorded_args("write_data")[0][0].values, 2 * 1.0 + xs)


def test_write_data_nan_reports_location(config_path):
    adapter, _ = make_adapter(config_path)
    with pytest.raises(NonFiniteSample) as info:
        adapter.write_data(lambda x, y: np.nan if y == 0.5 else 1.0)
    assert info.value.location == (1.0, 0.5)


def test_write_vector_data(config_path):
    space = unit_square(kind=Kind.VECTOR2)
    adapter, mock = make_adapter(config_path, space)
    rho_g = 9.81 * 1000
    adapter.write_data(lambda x, y: (0.0, -rho_g))
    vals = mock.recorded_args("write_data")[0][0].values
    assert vals.shape == (11, 2)
    np.testing.assert_array_equal(vals, np.tile([0.0, -rho_g], (11, 1)))


# -- coupling expressions ------------------------------------------------------------------

def test_expression_constant_and_linear(config_path):
    adapter, _ = make_adapter(config_path)
    expr = adapter.create_coupling_expression()
    assert expr(1.0, 0.3) == 0.0  # nothing read yet
    adapter.update_coupling_expression(expr, {p: 300.0 for p in edge_points()})
    assert np.allclose(expr(np.ones(7), np.linspace(0, 1, 7)), 300.0, rtol=0, atol=1e-12)
    adapter.update_coupling_expression(expr, {p: 2 + 3 * p[1] for p in edge_points()})
    assert abs(expr(1.0, 0.25) - 2.75) <= 1e-10


def test_expression_aliasing(config_path):
    adapter, _ = make_adapter(config_path)
    expr = adapter.create_coupling_expression()
    alias = expr
    for c in (1.0, -4.0, 7.5):
        adapter.update_coupling_expression(expr, {p: c for p in edge_points()})
        assert abs(alias(1.0, 0.55) - c) <= 1e-12


def test_expression_handles_must_be_live(config_path):
    adapter, _ = make_adapter(config_path)
    with pytest.raises(ExpressionNotCreated):
        adapter.update_coupling_expression(CouplingExpression(), {(1.0, 0.0): 1.0})
    expr = adapter.create_coupling_expression()
    expr.release()
    with pytest.raises(ExpressionNotCreated):
        adapter.update_coupling_expression(expr, {(1.0, 0.0): 1.0})


# -- point sources -----------------------------------------------------------------

def test_point_sources_split_components(config_path):
    adapter, _ = make_adapter(config_path, unit_square(kind=Kind.VECTOR2))
    v0, v1 = (1.0, 0.0), (1.0, 0.1)
    xs, ys = adapter.get_point_sources({v0: (1.0, 0.0), v1: (0.0, 2.0)})
    assert [(p.location, p.magnitude) for p in xs] == [(v0, 1.0), (v1, 0.0)]
    assert [(p.location, p.magnitude) for p in ys] == [(v0, 0.0), (v1, 2.0)]
    xs, ys = adapter.get_point_sources({v0: (0.0, 0.0), v1: (0.0, 0.0)})
    assert len(xs) == len(ys) == 2 and all(p.magnitude == 0.0 for p in xs + ys)


def test_point_sources_errors(config_path):
    adapter, _ = make_adapter(config_path)
    with pytest.raises(KindMismatch):
        adapter.get_point_sources({(1.0, 0.0): 300.0})
    owners = (np.arange(121) % 2).astype(int)
    parallel, _ = make_adapter(config_path, unit_square(owners=owners, kind=Kind.VECTOR2))
    with pytest.raises(ParallelPointSourcesUnsupported):
        parallel.get_point_sources({(1.0, 0.0): (1.0, 0.0)})


# -- checkpoints ---------------------------------------------------------------------

def test_checkpoint_is_deep_copy(config_path):
    adapter, mock = make_adapter(config_path)
    mock.set_return("is_action_required", [True, True])
    live = np.array([1.0, 2.0, 3.0])
    adapter.store_checkpoint(live, 0.5, 3)
    live[:] = 9.0
    u, t, n = adapter.retrieve_checkpoint()
    np.testing.assert_array_equal(u, [1.0, 2.0, 3.0])
    assert (t, n) == (0.5, 3)
    fulfilled = [c[0] for c in mock.recorded_args("mark_action_fulfilled")]
    assert fulfilled == [Action.WRITE_ITERATION_CHECKPOINT, Action.READ_ITERATION_CHECKPOINT]
    # the stored copy is not handed out by reference either
    u[:] = -1.0
    mock.set_return("is_action_required", [True])
    np.testing.assert_array_equal(adapter.retrieve_checkpoint()[0], [1.0, 2.0, 3.0])


def test_checkpoint_gating(config_path):
    adapter, mock = make_adapter(config_path)
    mock.set_return("is_action_required", [False, False, True])
    with pytest.raises(CheckpointActionNotPending):
        adapter.store_checkpoint(np.zeros(3), 0.0)
    with pytest.raises(CheckpointActionNotPending):
        adapter.retrieve_checkpoint()
    with pytest.raises(NoCheckpointStored):
        adapter.retrieve_checkpoint()
    assert mock.recorded_args("mark_action_fulfilled") == []


def test_solver_loop_rolls_back(config_path):
    """Store at window start, iterate once unconverged, retrieve and recompute the window."""
    adapter, mock = make_adapter(config_path)
    mock.set_return("is_coupling_ongoing", [True, True, False])
    # loop 1: write cp pending, then read cp pending; loop 2: no write cp, no read cp
    mock.set_return("is_action_required", [True, True, True, True, False, False])
    mock.set_return("read_data", [np.full(11, 1.0), np.full(11, 2.0)])
    mock.set_return("advance", [0.1, 0.1])
    u, t = np.zeros(3), 0.0
    history = []
    expr = adapter.create_coupling_expression()
    while adapter.is_coupling_ongoing():
        if adapter.is_action_required(adapter.action_write_iteration_checkpoint()):
            adapter.store_checkpoint(u, t)
        adapter.update_coupling_expression(expr, adapter.read_data())
        u = u + float(expr(1.0, 0.5))
        t += 0.1
        adapter.write_data(lambda x, y: float(u[0]))
        adapter.advance(0.1)
        if adapter.is_action_required(adapter.action_read_iteration_checkpoint()):
            u, t, _ = adapter.retrieve_checkpoint()
        history.append((t, u.copy()))
    assert history[0][0] == 0.0 and np.all(history[0][1] == 0.0)  # rolled back to the stored state
    assert history[1][0] == pytest.approx(0.1)
    np.testing.assert_allclose(history[1][1], 2.0, rtol=0, atol=1e-12)
    assert [c[0] for c in mock.recorded_args("advance")] == [0.1, 0.1]


def test_passthroughs(config_path):
    adapter, mock = make_adapter(config_path)
    mock.set_return("advance", [0.05])
    mock.set_return("is_time_window_complete", [False])
    assert adapter.advance(0.05) == 0.05
    assert adapter.is_time_window_complete() is False
    adapter.mark_action_fulfilled(Action.WRITE_ITERATION_CHECKPOINT)
    assert mock.call_order[-3:] == ["advance", "is_time_window_complete", "mark_action_fulfilled"]
    assert adapter.coupling_trace == []


def test_read_initial_data(config_path):
    adapter, mock = make_adapter(config_path)
    mock.set_return("initial_read_data", [np.full(11, 310.0)])
    assert set(adapter.read_initial_data().values()) == {310.0}


# -- ghost synchronization ---------------------------------------------------------------

def gather_scatter_oracle(owned_by, ghosts_of, values):
    """Brute force: every partition's ghost gets the value its unique owner holds."""
    out = []
    for rank, owned in enumerate(owned_by):
        local = {v: values[rank][v] for v in owned}
        for g in ghosts_of[rank]:
            owners = [r for r, o in enumerate(owned_by) if g in o]
            assert len(owners) == 1
            local[g] = values[owners[0]][g]
        out.append(local)
    return out


def test_ghost_sync_six_five_split():
    owned = [set(range(6)), set(range(6, 11))]
    ghosts = [{6}, {5}]
    values = [{i: 10.0 + i for i in owned[0]}, {i: 100.0 + i for i in owned[1]}]
    parts = [LogicalPartition(0, owned[0], ghosts[0]), LogicalPartition(1, owned[1], ghosts[1])]
    synced = synchronize_ghosts(parts, values)
    assert synced == gather_scatter_oracle(owned, ghosts, values)
    assert len(synced[0]) == 7 and len(synced[1]) == 6
    assert synced[0][6] == synced[1][6] == 106.0
    assert synced[0][5] == synced[1][5] == 15.0
    assert synchronize_ghosts(parts, synced) == synced  # idempotent


def test_ghost_sync_single_partition_and_errors():
    values = [{i: float(i) for i in range(11)}]
    assert synchronize_ghosts([LogicalPartition(0, range(11))], values) == values
    with pytest.raises(OwnershipGap):
        synchronize_ghosts([LogicalPartition(0, range(5), [7])], [{i: 0.0 for i in range(5)}])
    with pytest.raises(OwnershipOverlap):
        synchronize_ghosts([LogicalPartition(0, [0, 1]), LogicalPartition(1, [1, 2])],
                           [{0: 0.0, 1: 1.0}, {1: 1.0, 2: 2.0}])


def test_adapter_ghost_sync_with_inactive_partition(config_path):
    owners = np.where(np.arange(121) // 11 >= 6, 1, 0)
    adapter, mock = make_adapter(config_path, unit_square(owners=owners))
    mock.set_return("read_data", [np.arange(11.0)] * 2)
    parts = [LogicalPartition(0, range(6), [6]), LogicalPartition(1, range(6, 11), [5]), LogicalPartition(2, [])]
    once = adapter.synchronize_ghost_values(parts)
    v6 = edge_points()[6]
    assert once[0][v6] == once[1][v6] == 6.0
    assert once[2] == {}
    assert adapter.synchronize_ghost_values(parts) == once
    # the inactive partition takes part in the regular calls without data
    expr = adapter.create_coupling_expression()
    adapter.update_coupling_expression(expr, {})
    assert expr(1.0, 0.5) == 0.0


def test_adapter_stack_stays_offline():
    """The adapter under test never imports the transport or the real kernel."""
    code = textwrap.dedent("""
        import json, sys, tempfile, pathlib
        import numpy as np
        from partcouple.adapter import Adapter, FunctionSpace
        from partcouple.mockkernel import MockKernel
        d = pathlib.Path(tempfile.mkdtemp())
        (d / "c.json").write_text(json.dumps(%r))
        (d / "a.json").write_text(json.dumps(%r))
        mock = MockKernel()
        mock.set_return("initialize", [0.1])
        mock.set_return("read_data", [np.arange(3.0)])
        a = Adapter(d / "a.json", kernel=mock)
        a.initialize(lambda x, y: x == 1.0, read_function_space=FunctionSpace(np.array([[1.0, 0.0], [1.0, 0.5], [1.0, 1.0]])))
        a.read_data()
        print(sorted(m for m in sys.modules if m.startswith("partcouple")))
        assert "partcouple.comm" not in sys.modules
        assert "partcouple.kernel" not in sys.modules
    """) % (COUPLING, dict(REFERENCE_ADAPTER, config_file_name="c.json"))
    res = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
