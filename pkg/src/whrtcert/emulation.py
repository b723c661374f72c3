"""Emulation-based bounds on the time between two received inputs.

``t_max(gamma, Lambda)`` is the classical explicit bound for emulated
controllers; ``t_tilde_max`` is its refinement for a given ``lambda`` in
(0, 1), which is the time the scalar ODE

    phi' = -2 Lambda phi - gamma (phi^2 + 1),   phi(0) = 1/lambda

needs to fall from ``1/lambda`` to ``lambda``. Along an inter-reception
interval, ``U = V + gamma * phi * W^2`` grows at most like
``exp(max(-eps, 2 (L - Lambda)) t)``.
"""

from __future__ import annotations

import math
import numbers
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "EmulationParams",
    "growth_rate",
    "t_max",
    "t_max_branch",
    "t_tilde_max",
    "lambda_for_horizon",
    "solve_phi",
    "phi_rhs",
    "u_value",
]

_EQUAL_RTOL = 1e-12


@dataclass(frozen=True)
class EmulationParams:
    """One feasible parameter set (gamma, L, Lambda, epsilon)."""

    gamma: float
    L: float
    Lambda: float
    epsilon: float

    def __post_init__(self):
        for name in ("gamma", "L", "Lambda"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")
        if not math.isfinite(self.epsilon):
            raise ValueError("epsilon must be finite")

    @property
    def rate(self) -> float:
        return growth_rate(self.epsilon, self.L, self.Lambda)

    @property
    def t_max(self) -> float:
        return t_max(self.gamma, self.Lambda)


def growth_rate(epsilon: float, L: float, Lambda: float) -> float:
    """Exponential rate ``max(-eps, 2 (L - Lambda))`` bounding V between receptions."""
    return max(-epsilon, 2.0 * (L - Lambda))


def _check_pos(**kw):
    for k, v in kw.items():
        if not (isinstance(v, numbers.Real) and math.isfinite(v) and v > 0):
            raise ValueError(f"{k} must be a positive finite number, got {v!r}")


def _atanh(z: float) -> float:
    if not 0 <= z < 1:
        raise ValueError(f"arctanh argument {z!r} outside [0, 1)")
    return 0.5 * math.log((1.0 + z) / (1.0 - z))


def _branch(gamma: float, Lambda: float) -> str:
    if abs(gamma - Lambda) <= _EQUAL_RTOL * max(gamma, Lambda):
        return "equal"
    return "arctan" if gamma > Lambda else "arctanh"


def t_max_branch(gamma: float, Lambda: float) -> str:
    """Which case of the piecewise formula applies: arctan, equal or arctanh."""
    _check_pos(gamma=gamma, Lambda=Lambda)
    return _branch(gamma, Lambda)


def t_max(gamma: float, Lambda: float) -> float:
    """Maximum admissible time between received inputs, in seconds."""
    _check_pos(gamma=gamma, Lambda=Lambda)
    branch = _branch(gamma, Lambda)
    if branch == "equal":
        return 1.0 / Lambda
    r = math.sqrt(abs((gamma / Lambda) ** 2 - 1.0))
    if branch == "arctan":
        return math.atan(r) / (Lambda * r)
    return _atanh(r) / (Lambda * r)


def t_tilde_max(lam: float, gamma: float, Lambda: float) -> float:
    """Time for phi to decay from 1/lam to lam; below t_max(gamma, Lambda)."""
    if not (isinstance(lam, numbers.Real) and 0 < lam < 1):
        raise ValueError(f"lambda must lie in (0, 1), got {lam!r}")
    _check_pos(gamma=gamma, Lambda=Lambda)
    branch = _branch(gamma, Lambda)
    if branch == "equal":
        return (1.0 - lam) / (Lambda * (1.0 + lam))
    r = math.sqrt(abs((gamma / Lambda) ** 2 - 1.0))
    z = r * (1.0 - lam) / (2.0 * lam / (1.0 + lam) * (gamma / Lambda - 1.0) + 1.0 + lam)
    if branch == "arctan":
        return math.atan(z) / (Lambda * r)
    return _atanh(z) / (Lambda * r)


def lambda_for_horizon(duration: float, gamma: float, Lambda: float) -> float:
    """The ``lam`` in (0, 1) with ``t_tilde_max(lam) == duration``.

    Requires ``0 < duration < t_max(gamma, Lambda)``.
    """
    _check_pos(duration=duration)
    tm = t_max(gamma, Lambda)
    if duration >= tm:
        raise ValueError(f"duration {duration} not below t_max {tm}")
    f = lambda lam: t_tilde_max(lam, gamma, Lambda) - duration
    lo, hi = 1e-300, 1.0 - 1e-15
    if f(lo) <= 0:
        raise ValueError("duration too close to t_max for double precision")
    return brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def phi_rhs(phi, gamma: float, Lambda: float):
    return -2.0 * Lambda * phi - gamma * (phi * phi + 1.0)


def solve_phi(lam: float, gamma: float, Lambda: float, t_end: float, dt: float):
    """RK4 samples ``(tau, phi)`` of the phi-ODE on ``[0, t_end]``.

    The final step is shortened to land on ``t_end`` exactly.
    """
    limit = t_tilde_max(lam, gamma, Lambda)
    if t_end < 0 or t_end > limit * (1 + 1e-12):
        raise ValueError(f"t_end must lie in [0, {limit}], got {t_end}")
    if not dt > 0:
        raise ValueError("dt must be positive")
    n = max(1, int(math.ceil(t_end / dt - 1e-9)))
    taus = np.empty(n + 1)
    phis = np.empty(n + 1)
    taus[0], phis[0] = 0.0, 1.0 / lam
    phi = 1.0 / lam
    for k in range(n):
        step = min(dt, t_end - k * dt)
        k1 = phi_rhs(phi, gamma, Lambda)
        k2 = phi_rhs(phi + 0.5 * step * k1, gamma, Lambda)
        k3 = phi_rhs(phi + 0.5 * step * k2, gamma, Lambda)
        k4 = phi_rhs(phi + step * k3, gamma, Lambda)
        phi = phi + step * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        taus[k + 1] = k * dt + step
        phis[k + 1] = phi
    return taus, phis


def u_value(v_of_x, w_of_e, gamma: float, phi):
    """U = V(x) + gamma * phi * W(e)^2."""
    return v_of_x + gamma * phi * w_of_e * w_of_e
