"""Finite-difference heat equation ``du/dt = laplace(u) + f`` on a rectangle.

Implicit Euler in time and the 5-point Laplacian in space. Both are exact for
the manufactured solution ``u = 1 + x**2 + alpha*y**2 + beta*t``, so any error
left in a coupled run is coupling error.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from ..errors import EdgeNotOnBoundary, SolveDiverged
from ..meshdata import CouplingMesh, DataField, Kind

SOLVE_RTOL = 1e-13
EDGE_TOL = 1e-12


class Role(str, enum.Enum):
    DIRICHLET = "dirichlet"
    NEUMANN = "neumann"
    MONOLITHIC = "monolithic"


def manufactured(x, y, t, alpha_ms=3.0, beta_ms=1.2):
    """Return ``(u, f, du/dx)`` of the manufactured solution."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    u = 1.0 + x**2 + alpha_ms * y**2 + beta_ms * t
    f = np.full(np.broadcast(x, y).shape, beta_ms - 2.0 - 2.0 * alpha_ms)[()]
    return u, f, 2.0 * x


@dataclass(frozen=True)
class HeatProblem:
    x_lo: float
    x_hi: float
    y_lo: float
    y_hi: float
    nx: int
    ny: int
    alpha_ms: float = 3.0
    beta_ms: float = 1.2
    dt_solver: float = 0.1
    role: Role = Role.MONOLITHIC

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))
        if self.nx < 2 or self.ny < 2:
            raise ValueError("need at least 2 cells per direction")
        if not (self.x_hi > self.x_lo and self.y_hi > self.y_lo):
            raise ValueError("empty domain")

    @classmethod
    def for_role(cls, role, nx: int = 10, ny: int = 10, **kw) -> HeatProblem:
        role = Role(role)
        if role is Role.DIRICHLET:
            return cls(0.0, 1.0, 0.0, 1.0, nx, ny, role=role, **kw)
        if role is Role.NEUMANN:
            return cls(1.0, 2.0, 0.0, 1.0, nx, ny, role=role, **kw)
        return cls(0.0, 2.0, 0.0, 1.0, 2 * nx, ny, role=role, **kw)

    def with_(self, **kw) -> HeatProblem:
        return replace(self, **kw)

    @property
    def x(self) -> np.ndarray:
        return np.linspace(self.x_lo, self.x_hi, self.nx + 1)

    @property
    def y(self) -> np.ndarray:
        return np.linspace(self.y_lo, self.y_hi, self.ny + 1)

    @property
    def hx(self) -> float:
        return (self.x_hi - self.x_lo) / self.nx

    @property
    def hy(self) -> float:
        return (self.y_hi - self.y_lo) / self.ny

    @property
    def points(self) -> np.ndarray:
        """All grid nodes, x fastest, shape ``((nx+1)*(ny+1), 2)``."""
        xx, yy = np.meshgrid(self.x, self.y)
        return np.column_stack([xx.ravel(), yy.ravel()])

    @property
    def coupling_column(self) -> int | None:
        """Grid column of the coupling edge: right edge for Dirichlet, left for Neumann."""
        if self.role is Role.DIRICHLET:
            return self.nx
        if self.role is Role.NEUMANN:
            return 0
        return None

    @property
    def coupling_x(self) -> float | None:
        col = self.coupling_column
        return None if col is None else float(self.x[col])

    def exact(self, t: float) -> np.ndarray:
        xx, yy = np.meshgrid(self.x, self.y)
        return manufactured(xx, yy, t, self.alpha_ms, self.beta_ms)[0]


@dataclass(frozen=True, eq=False)
class HeatState:
    u: np.ndarray  # (ny+1, nx+1)
    t: float
    n: int = 0

    def copy(self) -> HeatState:
        return HeatState(self.u.copy(), self.t, self.n)


def initial_state(problem: HeatProblem) -> HeatState:
    return HeatState(problem.exact(0.0), 0.0, 0)


class HeatSolver:
    """Assembles and factorizes the implicit-Euler system, cached per timestep size."""

    def __init__(self, problem: HeatProblem):
        self.problem = problem
        self._factors = {}
        nxp, nyp = problem.nx + 1, problem.ny + 1
        jj, ii = np.meshgrid(np.arange(nyp), np.arange(nxp), indexing="ij")
        outer = (ii == 0) | (ii == problem.nx) | (jj == 0) | (jj == problem.ny)
        col = problem.coupling_column
        self.coupled = np.zeros_like(outer)
        self.neumann = np.zeros_like(outer)
        if problem.role is Role.DIRICHLET:
            self.coupled[:, col] = True
        elif problem.role is Role.NEUMANN:
            # corners stay on the outer Dirichlet data
            self.neumann[1:-1, col] = True
        self.dirichlet = outer & ~self.coupled & ~self.neumann

    def _index(self, j, i):
        return j * (self.problem.nx + 1) + i

    def _matrix(self, dt: float):
        key = float(dt)
        if key in self._factors:
            return self._factors[key]
        p = self.problem
        nxp, nyp = p.nx + 1, p.ny + 1
        cx, cy = 1.0 / p.hx**2, 1.0 / p.hy**2
        rows, cols, vals = [], [], []

        def add(r, c, v):
            rows.append(r)
            cols.append(c)
            vals.append(v)

        for j in range(nyp):
            for i in range(nxp):
                k = self._index(j, i)
                if self.dirichlet[j, i] or self.coupled[j, i]:
                    add(k, k, 1.0)
                    continue
                add(k, k, 1.0 / dt + 2.0 * cx + 2.0 * cy)
                add(k, self._index(j - 1, i), -cy)
                add(k, self._index(j + 1, i), -cy)
                if self.neumann[j, i]:
                    # ghost node mirrored through the edge: u_ghost = u_inner -/+ 2 h q
                    inner = i + 1 if i == 0 else i - 1
                    add(k, self._index(j, inner), -2.0 * cx)
                else:
                    add(k, self._index(j, i - 1), -cx)
                    add(k, self._index(j, i + 1), -cx)
        a = sp.csc_matrix((vals, (rows, cols)), shape=(nxp * nyp, nxp * nyp))
        entry = (a, splu(a))
        self._factors[key] = entry
        return entry

    def step(self, state: HeatState, dt: float, coupling_values=None) -> HeatState:
        """One implicit-Euler step to ``state.t + dt``.

        ``coupling_values`` holds one value per coupling-edge node (bottom to
        top): temperatures for the Dirichlet role, ``du/dx`` for the Neumann
        role. Ignored for the monolithic role.
        """
        p = self.problem
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        t_new = state.t + dt
        exact_new = p.exact(t_new)
        _, f, _ = manufactured(0.0, 0.0, t_new, p.alpha_ms, p.beta_ms)
        b = state.u / dt + f
        b = np.where(self.dirichlet, exact_new, b)
        col = p.coupling_column
        if col is not None:
            cv = np.asarray(coupling_values, dtype=float).reshape(p.ny + 1)
            if not np.all(np.isfinite(cv)):
                raise ValueError("coupling values must be finite")
            if p.role is Role.DIRICHLET:
                b[:, col] = cv
            else:
                # du/dx = q on the left edge; the ghost elimination moves -2q/h to the right-hand side
                sign = 1.0 if col == 0 else -1.0
                b[1:-1, col] -= sign * 2.0 * cv[1:-1] / p.hx
        a, lu = self._matrix(dt)
        rhs = b.ravel()
        u = lu.solve(rhs)
        res = np.abs(a @ u - rhs).max()
        scale = abs(a).max() * np.abs(u).max() + np.abs(rhs).max()
        if not np.all(np.isfinite(u)) or res > SOLVE_RTOL * scale:
            raise SolveDiverged(f"linear solve residual {res:.3e} exceeds {SOLVE_RTOL:g} relative")
        return HeatState(u.reshape(p.ny + 1, p.nx + 1), t_new, state.n + 1)


def step_heat(problem: HeatProblem, state: HeatState, dt: float, coupling_values=None) -> HeatState:
    return HeatSolver(problem).step(state, dt, coupling_values)


def edge_mesh(problem: HeatProblem, name: str = "edge", x: float | None = None) -> CouplingMesh:
    x = problem.coupling_x if x is None else x
    return CouplingMesh(name, np.column_stack([np.full(problem.ny + 1, x), problem.y]))


def extract_flux(problem: HeatProblem, state: HeatState, x: float | None = None, name: str = "HeatFlux") -> DataField:
    """``du/dx`` on the vertical grid edge at ``x`` via a one-sided 3-point difference."""
    x = problem.coupling_x if x is None else x
    u = state.u
    h = problem.hx
    if x is not None and abs(x - problem.x_hi) <= EDGE_TOL:
        q = (3.0 * u[:, -1] - 4.0 * u[:, -2] + u[:, -3]) / (2.0 * h)
    elif x is not None and abs(x - problem.x_lo) <= EDGE_TOL:
        q = (-3.0 * u[:, 0] + 4.0 * u[:, 1] - u[:, 2]) / (2.0 * h)
    else:
        raise EdgeNotOnBoundary(f"x = {x} is not a vertical boundary of [{problem.x_lo}, {problem.x_hi}]")
    return DataField(name, Kind.SCALAR, edge_mesh(problem, name="edge", x=x), q)


def errors(problem: HeatProblem, state: HeatState) -> tuple[float, float]:
    """``(L-inf, discrete L2)`` distance from the manufactured solution at ``state.t``."""
    e = state.u - problem.exact(state.t)
    return float(np.abs(e).max()), float(np.sqrt(problem.hx * problem.hy * np.sum(e**2)))
