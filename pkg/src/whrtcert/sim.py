"""Simulation of the sampled-data loop with dropouts, and trace-level bound checks.

Between receptions the actuator holds kappa(x(tau_z)); the sampling error
e = x(tau_z) - x jumps to zero at every reception. Integration is fixed-step
RK4 with ``steps_per_period`` steps per sampling period, so every sampling
instant is hit exactly.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .certify import ParameterTable, _coefficients, _worst_walk_dp
from .constraints import Constraint, satisfies
from .emulation import lambda_for_horizon, phi_rhs, u_value
from .graph import WhrtGraph, generate_sequence
from .systems import ScalarPolySystem

__all__ = [
    "DdsConfig",
    "SimTrace",
    "SimulationDiverged",
    "simulate",
    "gen_sequence_from_graph",
    "BoundReport",
    "validate_prop2_bounds",
    "WindowReport",
    "validate_prop1_windows",
    "walk_window_times",
    "DIVERGENCE_LIMIT",
]

DIVERGENCE_LIMIT = 1e9
MIN_STEPS_PER_PERIOD = 50


@dataclass(frozen=True)
class DdsConfig:
    sys: ScalarPolySystem
    h: float
    x0: float
    sequence: tuple[int, ...]
    t_end: float
    steps_per_period: int = 50

    def __post_init__(self):
        object.__setattr__(self, "sequence", tuple(int(b) for b in self.sequence))
        if not self.h > 0:
            raise ValueError("h must be positive")
        if self.steps_per_period < MIN_STEPS_PER_PERIOD:
            raise ValueError(f"need at least {MIN_STEPS_PER_PERIOD} steps per period (dt <= h/50)")
        if not self.sequence or self.sequence[0] != 1:
            raise ValueError("dropout sequence must start with a reception (1)")
        if not self.t_end > 0:
            raise ValueError("t_end must be positive")
        if len(self.sequence) < self.n_periods:
            raise ValueError(f"sequence covers {len(self.sequence)} periods, need {self.n_periods}")

    @property
    def dt(self) -> float:
        return self.h / self.steps_per_period

    @property
    def n_periods(self) -> int:
        return int(math.ceil(self.t_end / self.h - 1e-9))


@dataclass
class SimTrace:
    """Samples on the integration grid; receptions are flagged on their sample."""

    t: np.ndarray
    x: np.ndarray
    e: np.ndarray
    V: np.ndarray
    received: np.ndarray
    receptions: list[float]
    reception_index: list[int]
    e_before_reset: list[float]
    h: float
    steps_per_period: int
    diverged: bool = False
    u_diag: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "x", "e", "V", "received"])
        for row in zip(self.t, self.x, self.e, self.V, self.received):
            wr.writerow([f"{row[0]:.10g}", f"{row[1]:.12g}", f"{row[2]:.12g}", f"{row[3]:.12g}", int(row[4])])
        return buf.getvalue()

    def gaps(self) -> list[int]:
        """Gap lengths in sampling periods between consecutive receptions."""
        idx = self.reception_index
        n = self.steps_per_period
        return [(b - a) // n for a, b in zip(idx, idx[1:])]


class SimulationDiverged(RuntimeError):
    def __init__(self, message: str, trace: SimTrace):
        self.trace = trace
        super().__init__(message)


def simulate(cfg: DdsConfig) -> SimTrace:
    """Integrate the loop over ``[0, n_periods * h]``."""
    sys = cfg.sys
    n = cfg.steps_per_period
    dt = cfg.dt
    K = cfg.n_periods
    total = K * n + 1
    t = np.empty(total)
    x = np.empty(total)
    e = np.empty(total)
    rec = np.zeros(total, dtype=bool)
    receptions, rec_idx, e_pre = [], [], []

    xc = float(cfg.x0)
    hold = xc
    j = 0
    t[0], x[0], e[0] = 0.0, xc, 0.0
    diverged = False
    # blow-up shows as inf/nan and is caught by the magnitude check below
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(K):
            if cfg.sequence[k]:
                e_pre.append(hold - xc)
                hold = xc
                rec[j] = True
                e[j] = 0.0
                receptions.append(k * cfg.h)
                rec_idx.append(j)
            u = float(sys._k(hold))
            for s in range(n):
                # x+e equals the held state, so the vector field sees a constant input
                k1 = sys._p(xc) + u
                k2 = sys._p(xc + 0.5 * dt * k1) + u
                k3 = sys._p(xc + 0.5 * dt * k2) + u
                k4 = sys._p(xc + dt * k3) + u
                xc = xc + dt * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
                j += 1
                t[j] = k * cfg.h + (s + 1) * dt
                x[j] = xc
                e[j] = hold - xc
                if not (abs(xc) <= DIVERGENCE_LIMIT):
                    diverged = True
                    break
            if diverged:
                break
    # a reception scheduled exactly at the end of the horizon is recorded too
    if not diverged and K < len(cfg.sequence) and cfg.sequence[K]:
        e_pre.append(hold - xc)
        rec[j] = True
        e[j] = 0.0
        receptions.append(K * cfg.h)
        rec_idx.append(j)
    end = j + 1
    with np.errstate(over="ignore", invalid="ignore"):
        V = sys.lyap(x[:end])
    trace = SimTrace(t[:end], x[:end], e[:end], V, rec[:end], receptions, rec_idx,
                     e_pre, cfg.h, n, diverged)
    if diverged:
        raise SimulationDiverged(f"|x| exceeded {DIVERGENCE_LIMIT:g} at t = {t[j]:.6g} s", trace)
    return trace


def gen_sequence_from_graph(g: WhrtGraph, length: int, mode: str = "random", seed: int = 0,
                            table: ParameterTable | None = None, c_walk: int | None = None,
                            constraint: Constraint | None = None) -> tuple[int, ...]:
    """Dropout sequence of ``length`` bits generated by walking ``g`` from its initial node.

    ``random``: uniformly random out-edge per step (numpy Generator, ``seed``).
    ``worst``: repeatedly append the walk of S(g, c_walk) that maximizes the
    weighted gap sum among walks starting at the current node.
    When ``constraint`` is given the result is checked against it.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    walk: list[int] = []
    cost = 0
    node = g.initial
    if mode == "random":
        rng = np.random.default_rng(seed)
        while cost < length:
            out = g.out_edges(node)
            idx = out[int(rng.integers(len(out)))]
            walk.append(idx)
            cost += g.edges[idx].label
            node = g.edges[idx].dst
    elif mode == "worst":
        if table is None or c_walk is None:
            raise ValueError("worst mode needs a parameter table and c_walk")
        coeff = _coefficients(table)
        cache: dict[int, list[int]] = {}
        while cost < length:
            if node not in cache:
                _, w = _worst_walk_dp(g, c_walk, coeff, [node])
                cache[node] = list(w.edges)
            for idx in cache[node]:
                walk.append(idx)
                cost += g.edges[idx].label
            node = g.edges[walk[-1]].dst
    else:
        raise ValueError(f"unknown mode {mode!r}")
    bits = generate_sequence(g, walk, closed=True)[:length]
    if constraint is not None and not satisfies(bits, constraint):
        raise AssertionError(f"generated sequence violates {constraint}")
    return bits


# ------------------------------------------------------------- bound checks

@dataclass
class IntervalCheck:
    start: float
    gap: int
    V_start: float
    V_end: float
    bound: float
    interior_max: float
    k1: float
    ok: bool
    interior_ok: bool
    U_ok: bool | None = None
    U_excess: float | None = None

    @property
    def margin(self) -> float:
        """Relative slack of the end-point bound (positive = satisfied)."""
        if self.bound == 0:
            return 0.0 if self.V_end == 0 else -math.inf
        return (self.bound - self.V_end) / self.bound


@dataclass
class BoundReport:
    intervals: list[IntervalCheck]
    rtol: float
    skipped: int = 0

    @property
    def n(self) -> int:
        return len(self.intervals)

    @property
    def fraction_ok(self) -> float:
        if not self.intervals:
            return 1.0
        return sum(c.ok for c in self.intervals) / len(self.intervals)

    @property
    def interior_ok(self) -> bool:
        return all(c.interior_ok for c in self.intervals)

    @property
    def u_ok(self) -> bool | None:
        vals = [c.U_ok for c in self.intervals if c.U_ok is not None]
        return all(vals) if vals else None

    def summary(self) -> str:
        lines = [
            f"per-interval exponential bound: {sum(c.ok for c in self.intervals)}/{self.n} intervals "
            f"within rtol {self.rtol:g} ({100 * self.fraction_ok:.6g}%)",
            f"interior bound V(x(t)) <= k1 V(x(tau_z)): {'holds' if self.interior_ok else 'VIOLATED'}",
        ]
        if self.u_ok is not None:
            lines.append(f"U-function bound: {'holds' if self.u_ok else 'VIOLATED'}")
        if self.intervals:
            worst = min(self.intervals, key=lambda c: c.margin)
            lines.append(f"smallest relative margin {worst.margin:.6g} at t = {worst.start:.6g} s (gap {worst.gap})")
        if self.skipped:
            lines.append(f"skipped {self.skipped} intervals with V(x(tau_z)) = 0")
        return "\n".join(lines)


def validate_prop2_bounds(trace: SimTrace, table: ParameterTable, rtol: float = 1e-3,
                          atol: float = 0.0, with_u: bool = False) -> BoundReport:
    """Check V(x(tau_{z+1})) <= exp(rate_i * (tau_{z+1} - tau_z)) V(x(tau_z)) per interval.

    ``rate_i`` comes from the parameter row of the observed gap length ``i``.
    The interior bound uses k1 = max(exp(rate_i * gap duration), 1). With
    ``with_u`` the phi-ODE is integrated on the same grid and
    U = V + gamma phi e^2 is checked against the same exponential envelope.
    """
    idx = trace.reception_index
    n = trace.steps_per_period
    out = []
    skipped = 0
    for a, b in zip(idx, idx[1:]):
        gap = (b - a) // n
        if gap < 1:
            raise ValueError("receptions closer than one sampling period")
        try:
            p = table[gap]
        except KeyError:
            raise ValueError(f"no parameter row for observed gap length {gap}") from None
        dur = trace.t[b] - trace.t[a]
        V0 = float(trace.V[a])
        if V0 == 0.0 and float(np.max(trace.V[a:b + 1])) == 0.0:
            skipped += 1
            continue
        growth = math.exp(p.rate * dur)
        k1 = max(growth, 1.0)
        bound = growth * V0
        V1 = float(trace.V[b])
        inner = float(np.max(trace.V[a:b]))
        ok = V1 <= bound * (1 + rtol) + atol
        chk = IntervalCheck(float(trace.t[a]), gap, V0, V1, bound, inner, k1, ok,
                            inner <= k1 * V0 * (1 + rtol) + atol)
        if with_u:
            chk.U_ok, chk.U_excess = _check_u(trace, a, b, p, rtol, atol)
        out.append(chk)
    return BoundReport(out, rtol, skipped)


def _check_u(trace: SimTrace, a: int, b: int, p, rtol: float, atol: float):
    dur = trace.t[b] - trace.t[a]
    if dur >= p.t_max:
        return None, None
    # any horizon strictly between the gap and t_max admits a lambda
    lam = lambda_for_horizon(0.5 * (dur + p.t_max), p.gamma, p.Lambda)
    dt = trace.h / trace.steps_per_period
    # phi' is stiff near 1/lam; substep so that dt_sub * |d phi'/d phi| stays small
    stiff = 2.0 * p.Lambda + 2.0 * p.gamma / lam
    sub = max(1, int(math.ceil(dt * stiff / 0.05)))
    ds = dt / sub
    phi = np.empty(b - a + 1)
    phi[0] = y = 1.0 / lam
    for k in range(b - a):
        for _ in range(sub):
            k1 = phi_rhs(y, p.gamma, p.Lambda)
            k2 = phi_rhs(y + 0.5 * ds * k1, p.gamma, p.Lambda)
            k3 = phi_rhs(y + 0.5 * ds * k2, p.gamma, p.Lambda)
            k4 = phi_rhs(y + ds * k3, p.gamma, p.Lambda)
            y = y + ds * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        phi[k + 1] = y
    if np.any(phi < lam * (1 - 1e-9)) or np.any(phi > (1 / lam) * (1 + 1e-9)):
        return False, math.inf
    # last sample is post-reset; use the pre-reset error there
    e = trace.e[a:b + 1].copy()
    e[-1] = trace.x[a] - trace.x[b]
    U = u_value(trace.V[a:b + 1], np.abs(e), p.gamma, phi)
    env = np.exp(p.rate * (trace.t[a:b + 1] - trace.t[a])) * trace.V[a]
    excess = float(np.max((U - env) / np.maximum(env, 1e-300)))
    return bool(np.all(U <= env * (1 + rtol) + atol)), excess


def walk_window_times(trace: SimTrace, c_walk: int) -> list[float]:
    """Window boundaries: from each boundary, the first reception whose
    accumulated gap count reaches ``c_walk`` closes the window."""
    gaps = trace.gaps()
    times = [trace.receptions[0]]
    acc = 0
    for z, gap in enumerate(gaps):
        acc += gap
        if acc >= c_walk:
            times.append(trace.receptions[z + 1])
            acc = 0
    return times


@dataclass
class WindowCheck:
    start: float
    end: float
    Vn_start: float
    Vn_end: float
    Vn_peak: float
    peak_ratio: float
    decreased: bool
    decay_ok: bool | None


@dataclass
class WindowReport:
    windows: list[WindowCheck]

    @property
    def all_decrease(self) -> bool:
        return all(w.decreased for w in self.windows)

    @property
    def decay_ok(self) -> bool | None:
        vals = [w.decay_ok for w in self.windows if w.decay_ok is not None]
        return all(vals) if vals else None

    def summary(self) -> str:
        n_dec = sum(w.decreased for w in self.windows)
        lines = [f"window decrease of V(x)+|e|: {n_dec}/{len(self.windows)} windows"]
        if self.windows:
            peak = max(w.peak_ratio for w in self.windows)
            lines.append(f"largest in-window peak of V(x) relative to window start: {peak:.6g}")
        if self.decay_ok is not None:
            lines.append(f"decay at least exp(-k3 dt) per window: {'holds' if self.decay_ok else 'VIOLATED'}")
        return "\n".join(lines)


def validate_prop1_windows(trace: SimTrace, window_times: Sequence[float], k3: float | None = None,
                           rtol: float = 1e-2) -> WindowReport:
    """Check decrease of V_n = V(x) + |e| between window boundaries and record
    in-window peaks. These are trace-level stand-ins for the class-K bounds,
    valid for the simulated trajectory only.

    ``peak_ratio`` is max V(x) over the window divided by V(x) at its start
    (e is zero there). The V_n ratio itself is not reported as a ratio: its
    |e| part is linear in the state while V is quadratic near the origin, so
    that ratio grows without bound as the state decays even though a class-K
    bound holds.
    """
    rec_t = np.asarray(trace.receptions)
    pos = []
    for tt in window_times:
        k = int(np.argmin(np.abs(rec_t - tt))) if len(rec_t) else -1
        if k < 0 or abs(rec_t[k] - tt) > 1e-9 * max(1.0, trace.h):
            raise ValueError(f"window time {tt} is not a reception instant")
        pos.append(trace.reception_index[k])
    spacing = np.diff(window_times)
    if np.any(spacing < trace.h * (1 - 1e-9)):
        raise ValueError("window boundaries must be at least one sampling period apart")
    Vn = trace.V + np.abs(trace.e)
    out = []
    for a, b in zip(pos, pos[1:]):
        v0, v1 = float(Vn[a]), float(Vn[b])
        vpeak = float(np.max(trace.V[a:b]))
        va = float(trace.V[a])
        ratio = vpeak / va if va > 0 else (0.0 if vpeak == 0 else math.inf)
        decreased = v1 < v0 or (v0 == 0.0 and v1 == 0.0)
        dec = None
        if k3 is not None:
            dec = v1 <= math.exp(-k3 * (trace.t[b] - trace.t[a])) * v0 * (1 + rtol)
        out.append(WindowCheck(float(trace.t[a]), float(trace.t[b]), v0, v1, float(np.max(Vn[a:b])), ratio,
                               decreased, dec))
    return WindowReport(out)
