"""Scalar polynomial closed loops  x' = p(x) + u,  u = kappa(x at last reception)."""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numpy.polynomial import Polynomial

__all__ = ["ScalarPolySystem", "example_system", "parse_system", "SystemSpecError"]


class SystemSpecError(ValueError):
    pass


def _poly(coeffs) -> Polynomial:
    return Polynomial(np.asarray(coeffs, dtype=float))


@dataclass(frozen=True)
class ScalarPolySystem:
    """Polynomials are given as ascending coefficient tuples.

    ``p``: plant drift, ``kappa``: feedback law, ``V``: Lyapunov candidate,
    ``q``: polynomial with H(x) = |q(x)|. W(e) = |e| throughout. ``L`` is
    the constant in the growth bound on W^2 along the error dynamics.
    """

    p: tuple[float, ...]
    kappa: tuple[float, ...]
    V: tuple[float, ...]
    q: tuple[float, ...]
    L: float
    name: str = "custom"

    def __post_init__(self):
        for fld in ("p", "kappa", "V", "q"):
            object.__setattr__(self, fld, tuple(float(c) for c in getattr(self, fld)))
            if not getattr(self, fld):
                raise ValueError(f"polynomial {fld} has no coefficients")
        if not self.L > 0:
            raise ValueError("L must be positive")
        object.__setattr__(self, "_p", _poly(self.p))
        object.__setattr__(self, "_k", _poly(self.kappa))
        object.__setattr__(self, "_V", _poly(self.V))
        object.__setattr__(self, "_dV", _poly(self.V).deriv())
        object.__setattr__(self, "_q", _poly(self.q))

    def drift(self, x, xhold):
        """Plant vector field with the input held at kappa(xhold)."""
        return self._p(x) + self._k(xhold)

    def f(self, x, e):
        return self._p(x) + self._k(x + e)

    def g(self, x, e):
        return -self.f(x, e)

    def lyap(self, x):
        return self._V(x)

    def lyap_grad(self, x):
        return self._dV(x)

    def H(self, x):
        return np.abs(self._q(x))

    def qval(self, x):
        return self._q(x)

    def check(self, x_max: float = 5.0, n: int = 1001) -> list[str]:
        """Grid surrogate for the standing assumptions; returns the list of problems."""
        problems = []
        if abs(self.p[0] + self.kappa[0]) > 1e-12:
            problems.append("origin is not an equilibrium: p(0) + kappa(0) != 0")
        if abs(self.V[0]) > 1e-12:
            problems.append("V(0) != 0")
        xs = np.linspace(-x_max, x_max, n)
        xs = xs[np.abs(xs) > 1e-12]
        if np.any(self.lyap(xs) <= 0):
            problems.append("V is not positive on the sampled grid")
        return problems


def example_system(d2: float = 1.0) -> ScalarPolySystem:
    """x' = d2 x^2 - x^3 + u with kappa(x) = -2x, V = x^4/2 - 2x^3/3 + 2x^2, L = 2."""
    return ScalarPolySystem(
        p=(0.0, 0.0, d2, -1.0),
        kappa=(0.0, -2.0),
        V=(0.0, 0.0, 2.0, -2.0 / 3.0, 0.5),
        q=(0.0, 2.0, -d2, 1.0),
        L=2.0,
        name=f"example(d2={d2:g})",
    )


_POLY_KEYS = {"p", "kappa", "V", "q", "L"}


def _number(tok: str, where: str) -> float:
    try:
        return float(Fraction(tok.strip()))
    except (ValueError, ZeroDivisionError):
        raise SystemSpecError(f"{where}: cannot parse number {tok.strip()!r}") from None


def parse_system(text: str) -> ScalarPolySystem:
    """Parse ``example``, ``example(d2)`` or
    ``poly:p=0,0,1,-1;kappa=0,-2;V=0,0,2,-2/3,1/2;q=0,2,-1,1;L=2``."""
    s = text.strip()
    m = re.fullmatch(r"example(?:\(\s*([^)]*)\))?", s)
    if m:
        d2 = _number(m.group(1), "example(d2)") if m.group(1) else 1.0
        return example_system(d2)
    if not s.startswith("poly:"):
        raise SystemSpecError(
            f"column 1: unknown system {text!r}; expected 'example', 'example(d2)' or 'poly:...'"
        )
    fields: dict[str, str] = {}
    col = len("poly:") + 1
    for part in s[5:].split(";"):
        if not part.strip():
            col += len(part) + 1
            continue
        key, eq, val = part.partition("=")
        key = key.strip()
        if not eq:
            raise SystemSpecError(f"column {col}: expected 'key=value'")
        if key not in _POLY_KEYS:
            raise SystemSpecError(f"column {col}: unknown key {key!r}; allowed {sorted(_POLY_KEYS)}")
        if key in fields:
            raise SystemSpecError(f"column {col}: duplicate key {key!r}")
        fields[key] = val
        col += len(part) + 1
    missing = _POLY_KEYS - fields.keys()
    if missing:
        raise SystemSpecError(f"missing keys: {sorted(missing)}")
    coeffs = {k: tuple(_number(t, k) for t in fields[k].split(",")) for k in ("p", "kappa", "V", "q")}
    sys = ScalarPolySystem(L=_number(fields["L"], "L"), name="poly", **coeffs)
    problems = sys.check()
    if problems:
        raise SystemSpecError("; ".join(problems))
    return sys
