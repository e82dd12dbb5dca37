"""Continuous boundary representation from nodal values.

A first-degree polynomial is fitted by least squares, then the residual is
interpolated with thin-plate splines ``phi(r) = r**2 log r``. The residual
solve carries the usual polynomial side conditions (weights orthogonal to the
polynomial basis), which makes the thin-plate system uniquely solvable and
the result independent of the coordinate scaling used internally.

All work happens in normalized coordinates ``(p - centroid) / diameter``.
When the points are collinear (a straight coupling edge) the polynomial is
taken in the arc-length coordinate along the principal direction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import pdist

from .errors import DuplicatePoints, SingularRbfSystem

COLLINEAR_RTOL = 1e-10
RESIDUAL_CUTOFF = 1e-13
REGULARIZATION = 1e-12


def tps(r: np.ndarray) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    out = np.zeros_like(r)
    nz = r > 0
    out[nz] = r[nz] ** 2 * np.log(r[nz])
    return out


@dataclass(frozen=True, eq=False)
class BoundaryInterpolant:
    """Polynomial + thin-plate-spline interpolant, possibly vector valued.

    ``coeffs`` has shape ``(nbasis, ncomp)`` and ``weights`` ``(ncenters,
    ncomp)``; both refer to normalized coordinates.
    """

    centroid: np.ndarray
    scale: float
    directions: np.ndarray  # (nbasis - 1, 2) rows spanning the polynomial's linear part
    centers_normalized: np.ndarray
    coeffs: np.ndarray
    weights: np.ndarray
    ncomp: int
    scalar: bool

    def _normalize(self, x, y) -> np.ndarray:
        p = np.stack([np.asarray(x, dtype=float), np.asarray(y, dtype=float)], axis=-1).reshape(-1, 2)
        return (p - self.centroid) / self.scale

    def _basis(self, q: np.ndarray) -> np.ndarray:
        return np.hstack([np.ones((len(q), 1)), q @ self.directions.T])

    def evaluate(self, x, y) -> np.ndarray:
        shape = np.broadcast(np.asarray(x), np.asarray(y)).shape
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        q = self._normalize(x, y)
        out = self._basis(q) @ self.coeffs
        if len(self.centers_normalized) and np.any(self.weights):
            r = np.sqrt(((q[:, None, :] - self.centers_normalized[None, :, :]) ** 2).sum(axis=-1))
            out = out + tps(r) @ self.weights
        if self.scalar:
            return out[:, 0].reshape(shape) if shape else out[0, 0]
        return out.reshape(shape + (self.ncomp,))

    __call__ = evaluate

    @property
    def rbf_centers(self) -> np.ndarray:
        return self.centers_normalized * self.scale + self.centroid

    @property
    def rbf_weights(self) -> np.ndarray:
        """Weights per center (normalized-coordinate scaling), shape (ncenters, ncomp)."""
        return self.weights

    @property
    def poly_coeffs(self) -> np.ndarray:
        """``(a0, a1, a2)`` per component of ``a0 + a1*x + a2*y`` in raw coordinates."""
        lin = np.zeros((2, self.ncomp))
        if len(self.directions):
            lin = self.directions.T @ self.coeffs[1:] / self.scale
        a0 = self.coeffs[0] - self.centroid @ lin
        return np.vstack([a0, lin])


def _polynomial_frame(q: np.ndarray) -> np.ndarray:
    """Directions spanning the well-posed linear part for normalized points ``q``."""
    n = len(q)
    if n == 1:
        return np.zeros((0, 2))
    _, s, vt = np.linalg.svd(q, full_matrices=False)
    if n >= 3 and s[1] > COLLINEAR_RTOL * s[0]:
        return np.eye(2)
    return vt[:1]


def fit_interpolant(points, values) -> BoundaryInterpolant:
    """Fit the boundary interpolant through ``values`` at ``points``.

    ``values`` is ``(N,)`` for scalar data or ``(N, k)`` for k components.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    vals = np.asarray(values, dtype=float)
    scalar = vals.ndim == 1
    vals = vals.reshape(len(pts), -1)
    n = len(pts)
    if n == 0:
        raise ValueError("at least one point is required")
    if n > 1 and cKDTree(pts).query_pairs(1e-12, p=np.inf):
        raise DuplicatePoints("interpolation points must be pairwise distinct")

    centroid = pts.mean(axis=0)
    scale = float(pdist(pts).max()) if n > 1 else 1.0
    q = (pts - centroid) / scale
    directions = _polynomial_frame(q)
    basis = np.hstack([np.ones((n, 1)), q @ directions.T])

    coeffs, *_ = np.linalg.lstsq(basis, vals, rcond=None)
    residual = vals - basis @ coeffs
    weights = np.zeros_like(vals)

    cutoff = RESIDUAL_CUTOFF * max(1.0, float(np.abs(vals).max(initial=0.0)))
    if np.abs(residual).max(initial=0.0) > cutoff:
        w, c = _solve_tps(q, basis, residual)
        weights = w
        coeffs = coeffs + c

    return BoundaryInterpolant(
        centroid=centroid,
        scale=scale,
        directions=directions,
        centers_normalized=q,
        coeffs=coeffs,
        weights=weights,
        ncomp=vals.shape[1],
        scalar=scalar,
    )


def _solve_tps(q: np.ndarray, basis: np.ndarray, rhs: np.ndarray):
    n, m = basis.shape
    r = np.sqrt(((q[:, None, :] - q[None, :, :]) ** 2).sum(axis=-1))
    system = np.zeros((n + m, n + m))
    system[:n, :n] = tps(r)
    system[:n, n:] = basis
    system[n:, :n] = basis.T
    full_rhs = np.vstack([rhs, np.zeros((m, rhs.shape[1]))])
    for shift in (0.0, REGULARIZATION):
        a = system.copy()
        a[np.arange(n), np.arange(n)] += shift
        try:
            sol = np.linalg.solve(a, full_rhs)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.isfinite(sol)):
            return sol[:n], sol[n:]
    raise SingularRbfSystem(f"thin-plate system for {n} points is singular")


def eval_interpolant(interp: BoundaryInterpolant, x, y):
    return interp.evaluate(x, y)
