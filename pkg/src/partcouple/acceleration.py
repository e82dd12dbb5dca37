"""Fixed-point acceleration for the implicit coupling iteration.

Both schemes map ``(previous, proposed)`` to the next iterate, where
``proposed`` is the raw output of one coupling sweep started from
``previous``.
"""

from __future__ import annotations

import numpy as np

from .errors import LengthMismatch

AITKEN_OMEGA_MIN = 1e-3
AITKEN_OMEGA_MAX = 1.0


def _residual(previous, proposed):
    previous = np.asarray(previous, dtype=float)
    proposed = np.asarray(proposed, dtype=float)
    if previous.shape != proposed.shape or previous.size == 0:
        raise LengthMismatch(f"previous {previous.shape} vs proposed {proposed.shape}")
    return previous, proposed, proposed - previous


class ConstantRelaxation:
    kind = "constant"

    def __init__(self, omega: float = 0.5):
        if not 0.0 < omega <= 1.0:
            raise ValueError(f"constant relaxation needs 0 < omega <= 1, got {omega}")
        self.omega = float(omega)

    def accelerate(self, previous, proposed) -> np.ndarray:
        previous, _, r = _residual(previous, proposed)
        return previous + self.omega * r

    def reset(self):
        return self


class AitkenRelaxation:
    """Aitken dynamic under-relaxation.

    The factor is re-estimated from consecutive residuals with the secant
    formula ``w' = -w <R_k, R_{k+1} - R_k> / |R_{k+1} - R_k|**2`` and clipped
    to ``[omega_min, omega_max]``.
    """

    kind = "aitken"

    def __init__(self, omega_initial: float = 0.5, omega_min: float = AITKEN_OMEGA_MIN,
                 omega_max: float = AITKEN_OMEGA_MAX):
        if not 0.0 < omega_min <= omega_max:
            raise ValueError(f"need 0 < omega_min <= omega_max, got [{omega_min}, {omega_max}]")
        self.omega_initial = float(omega_initial)
        self.omega_min = float(omega_min)
        self.omega_max = float(omega_max)
        self.omega = float(np.clip(omega_initial, omega_min, omega_max))
        self.previous_residual = None
        # set when two consecutive residuals coincide; the proposed value is passed through
        self.stalled = False

    def accelerate(self, previous, proposed) -> np.ndarray:
        previous, proposed, r = _residual(previous, proposed)
        self.stalled = False
        if self.previous_residual is None:
            self.previous_residual = r.copy()
            return previous + self.omega * r
        if self.previous_residual.shape != r.shape:
            raise LengthMismatch(f"residual changed shape {self.previous_residual.shape} -> {r.shape}")
        dr = (r - self.previous_residual).ravel()
        dnorm = float(np.linalg.norm(dr))
        if dnorm < 1e-300:
            self.stalled = True
            self.previous_residual = r.copy()
            return proposed.copy()
        omega = -self.omega * float((self.previous_residual.ravel() / dnorm) @ (dr / dnorm))
        if not np.isfinite(omega):
            omega = self.omega_min
        self.omega = float(np.clip(omega, self.omega_min, self.omega_max))
        self.previous_residual = r.copy()
        return previous + self.omega * r

    def reset(self):
        self.omega = float(np.clip(self.omega_initial, self.omega_min, self.omega_max))
        self.previous_residual = None
        self.stalled = False
        return self


def make_scheme(params: dict | None):
    """Build a scheme from the ``acceleration`` block of a coupling config."""
    if not params:
        return ConstantRelaxation(1.0)
    kind = params.get("kind", "constant")
    if kind == "constant":
        return ConstantRelaxation(params.get("omega", 1.0))
    if kind == "aitken":
        return AitkenRelaxation(
            params.get("omega", 0.5),
            params.get("omega_min", AITKEN_OMEGA_MIN),
            params.get("omega_max", AITKEN_OMEGA_MAX),
        )
    raise ValueError(f"unknown acceleration kind {kind!r}")
