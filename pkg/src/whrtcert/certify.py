"""Stability certificates for sampled-data loops under WHRT dropouts.

Two decision procedures are provided:

* the maximum-number-of-dropouts baseline, which only uses the longest
  admissible gap: ``h < t_max(gamma, L) / (w + 1)``;
* the walk-sum certificate, which assigns a parameter set to every gap
  length ``i`` and requires ``i h < t_max(gamma_i, Lambda_i)`` for each
  ``i`` together with a strictly negative weighted gap sum along every walk
  of S(G, c_walk).

Assumption checks on the plant are grid spot checks, not proofs.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Mapping, Sequence

import numpy as np

from .constraints import Constraint, max_consecutive_losses
from .emulation import EmulationParams, growth_rate, t_max
from .graph import WhrtGraph, build_graph
from .systems import ScalarPolySystem
from .walks import DEFAULT_WALK_CAP, Walk, WalkSetTooLarge, iter_walk_set, resolve_starts

__all__ = [
    "ParameterTable",
    "ParamsParseError",
    "parse_params_text",
    "reference_table",
    "FeasibilityGrid",
    "FeasibilityReport",
    "check_assumption2",
    "max_dropout_bound",
    "Certificate",
    "theorem1_certify",
    "walk_sum",
    "HBound",
    "max_certifiable_h",
    "ParameterGrid",
    "InfeasibleError",
    "search_parameters",
    "STRICT_RTOL",
    "GRID_CAVEAT",
]

log = logging.getLogger(__name__)

STRICT_RTOL = 1e-9
MARGIN_TOL = 1e-9
GRID_CAVEAT = "grid-verified, not a sum-of-squares certificate (numerical spot check, not a proof)"


# ---------------------------------------------------------------- parameters

class ParameterTable:
    """Parameter sets indexed by gap length ``i = 1..k``."""

    def __init__(self, rows: Mapping[int, EmulationParams] | Sequence[EmulationParams]):
        if isinstance(rows, Mapping):
            keys = sorted(rows)
            if keys != list(range(1, len(keys) + 1)):
                raise ValueError(f"gap indices must be 1..k without holes, got {keys}")
            rows = [rows[i] for i in keys]
        self.rows: tuple[EmulationParams, ...] = tuple(rows)
        if not self.rows:
            raise ValueError("no parameter rows")

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, i: int) -> EmulationParams:
        if not 1 <= i <= len(self.rows):
            raise KeyError(f"no parameter row for gap length {i}")
        return self.rows[i - 1]

    def __iter__(self):
        return iter(enumerate(self.rows, 1))

    def __eq__(self, other):
        return isinstance(other, ParameterTable) and self.rows == other.rows

    def __repr__(self):
        return f"ParameterTable({list(self.rows)!r})"

    def rates(self) -> dict[int, float]:
        return {i: p.rate for i, p in self}

    def to_text(self) -> str:
        lines = ["# i gamma L Lambda epsilon"]
        for i, p in self:
            lines.append(f"{i} {p.gamma:.10g} {p.L:.10g} {p.Lambda:.10g} {p.epsilon:.10g}")
        return "\n".join(lines) + "\n"


class ParamsParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


def parse_params_text(text: str) -> ParameterTable:
    """Rows ``i gamma L Lambda epsilon``; ``#`` starts a comment."""
    rows: dict[int, EmulationParams] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ParamsParseError(f"expected 5 fields 'i gamma L Lambda epsilon', got {len(parts)}", lineno)
        try:
            i = int(parts[0])
        except ValueError:
            raise ParamsParseError(f"gap index {parts[0]!r} is not an integer", lineno) from None
        if i < 1:
            raise ParamsParseError("gap index must be >= 1", lineno)
        if i in rows:
            raise ParamsParseError(f"duplicate gap index {i}", lineno)
        try:
            gamma, L, Lam, eps = (float(x) for x in parts[1:])
            rows[i] = EmulationParams(gamma=gamma, L=L, Lambda=Lam, epsilon=eps)
        except ValueError as exc:
            raise ParamsParseError(str(exc), lineno) from None
    if not rows:
        raise ParamsParseError("no parameter rows")
    try:
        return ParameterTable(rows)
    except ValueError as exc:
        raise ParamsParseError(str(exc)) from None


def reference_table() -> ParameterTable:
    """The published parameter sets for the cubic example and ``any:17/20``."""
    text = resources.files("whrtcert").joinpath("data/reference_params.cfg").read_text()
    return parse_params_text(text)


# --------------------------------------------------------------- feasibility

@dataclass(frozen=True)
class FeasibilityGrid:
    x_max: float = 5.0
    e_max: float = 5.0
    n: int = 500

    def axes(self):
        if not (self.x_max > 0 and self.e_max > 0):
            raise ValueError("grid box must have positive extent")
        if self.n * self.n < 10_000:
            raise ValueError(f"grid needs at least 1e4 points, got {self.n}x{self.n}")
        return np.linspace(-self.x_max, self.x_max, self.n), np.linspace(-self.e_max, self.e_max, self.n)


@dataclass
class FeasibilityReport:
    params: EmulationParams
    grid: FeasibilityGrid
    v_margin: float
    v_witness: tuple[float, float]
    w_margin: float
    w_witness: tuple[float, float]
    tol: float = MARGIN_TOL
    caveat: str = GRID_CAVEAT

    @property
    def v_ok(self) -> bool:
        return self.v_margin >= -self.tol

    @property
    def w_ok(self) -> bool:
        return self.w_margin >= -self.tol

    @property
    def feasible(self) -> bool:
        return self.v_ok and self.w_ok

    def summary(self) -> str:
        p = self.params
        g = self.grid
        verdict = "feasible" if self.feasible else "INFEASIBLE"
        lines = [
            f"assumption check (gamma={p.gamma:.6g}, L={p.L:.6g}, epsilon={p.epsilon:.6g}) "
            f"on [-{g.x_max:g},{g.x_max:g}]x[-{g.e_max:g},{g.e_max:g}], {g.n}x{g.n} points: {verdict}",
            f"  V-decrease min margin {self.v_margin:.10g} at (x, e) = "
            f"({self.v_witness[0]:.6g}, {self.v_witness[1]:.6g})",
            f"  W-growth   min margin {self.w_margin:.10g} at (x, e) = "
            f"({self.w_witness[0]:.6g}, {self.w_witness[1]:.6g})",
            f"  note: {self.caveat}",
        ]
        return "\n".join(lines)


class _MarginGrid:
    """Precomputed pieces of both inequalities; margins are affine in eps and gamma^2."""

    def __init__(self, sys: ScalarPolySystem, grid: FeasibilityGrid):
        xs, es = grid.axes()
        self.grid = grid
        self.xs, self.es = xs, es
        X = xs[:, None]
        E = es[None, :]
        q = sys.qval(xs)[:, None]
        self.V = sys.lyap(xs)[:, None]
        f = sys.f(X, E)
        # margin_V = base - eps*V + gamma^2 e^2
        self.base = -(q * q) - sys.lyap_grad(X) * f
        self.e2 = E * E
        self.absq = np.abs(q)
        self.g = -f
        self.absE = np.abs(E)

    def v_margin(self, gamma: float, eps: float) -> np.ndarray:
        return self.base - eps * self.V + gamma * gamma * self.e2

    def w_margin(self, L: float) -> np.ndarray:
        return 2.0 * self.absE * (L * self.absE + self.absq) - 2.0 * self.es[None, :] * self.g

    def witness(self, arr: np.ndarray) -> tuple[float, tuple[float, float]]:
        k = np.unravel_index(int(np.argmin(arr)), arr.shape)
        return float(arr[k]), (float(self.xs[k[0]]), float(self.es[k[1]]))


def check_assumption2(sys: ScalarPolySystem, params: EmulationParams,
                      grid: FeasibilityGrid = FeasibilityGrid()) -> FeasibilityReport:
    """Spot-check both growth inequalities for ``params`` on a dense box grid.

    V-decrease:  <V'(x), f(x,e)> <= -eps V(x) - H(x)^2 + gamma^2 W(e)^2
    W-growth:    <dW^2/de, g(x,e)> <= 2 W(e) (L W(e) + H(x))
    """
    mg = _MarginGrid(sys, grid)
    vm, vw = mg.witness(mg.v_margin(params.gamma, params.epsilon))
    wm, ww = mg.witness(mg.w_margin(params.L))
    return FeasibilityReport(params, grid, vm, vw, wm, ww)


# ------------------------------------------------------------------ baseline

def max_dropout_bound(c: Constraint, gamma: float, L: float) -> float:
    """Sampling period bound using only the longest gap: t_max(gamma, L) / (w + 1)."""
    return t_max(gamma, L) / (max_consecutive_losses(c) + 1)


# --------------------------------------------------------------- certificate

def _coefficients(table: ParameterTable) -> dict[int, Fraction]:
    return {i: Fraction(r) for i, r in table.rates().items()}


def walk_sum(g: WhrtGraph, walk: Walk | Sequence[int], table: ParameterTable, h: float = 1.0) -> float:
    """``sum h * l * max(-eps_l, 2 (L_l - Lambda_l))`` along a walk."""
    edges = walk.edges if isinstance(walk, Walk) else walk
    return h * sum(g.edges[i].label * table[g.edges[i].label].rate for i in edges)


def _worst_walk_dp(g: WhrtGraph, c_walk: int, coeff: Mapping[int, Fraction], starts: list[int]):
    """Exact maximum of the weighted label sum over S(g, c_walk).

    ``best[v][b]`` is the maximal sum over walks from ``v`` that stop once
    their cost reaches the remaining budget ``b``. Ties resolve to the
    smallest edge index, which yields the lexicographically smallest
    maximizer.
    """
    n = g.n_nodes
    best = [[Fraction(0)] * (c_walk + 1) for _ in range(n)]
    choice = [[-1] * (c_walk + 1) for _ in range(n)]
    for b in range(1, c_walk + 1):
        for v in range(n):
            top = None
            arg = -1
            for idx in g.out_edges(v):
                e = g.edges[idx]
                val = e.label * coeff[e.label]
                if b - e.label > 0:
                    val += best[e.dst][b - e.label]
                if top is None or val > top:
                    top, arg = val, idx
            best[v][b] = top
            choice[v][b] = arg
    s0 = max(starts, key=lambda s: (best[s][c_walk], -s))
    path = []
    v, b, cost = s0, c_walk, 0
    while b > 0:
        idx = choice[v][b]
        path.append(idx)
        lab = g.edges[idx].label
        cost += lab
        b -= lab
        v = g.edges[idx].dst
    return best[s0][c_walk], Walk(s0, tuple(path), cost)


def _worst_walk_enum(g: WhrtGraph, c_walk: int, coeff: Mapping[int, Fraction], starts: list[int],
                     cap: int):
    top = None
    arg = None
    for k, w in enumerate(iter_walk_set(g, c_walk, starts)):
        if k >= cap:
            raise WalkSetTooLarge(f"walk set too large (more than {cap} walks)")
        val = sum(g.edges[i].label * coeff[g.edges[i].label] for i in w.edges)
        if top is None or val > top:
            top, arg = val, w
    return top, arg


@dataclass
class Certificate:
    constraint: Constraint
    h: float
    c_walk: int
    table: ParameterTable
    certified: bool
    worst_walk: Walk | None
    worst_sum: float
    k3: float | None
    timing: list[tuple[int, float, float, bool]] = field(default_factory=list)
    failures: list[str] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        return "certified" if self.certified else "not-certified"

    @property
    def timing_ok(self) -> bool:
        return all(ok for *_, ok in self.timing)

    @property
    def sum_ok(self) -> bool:
        return self.diagnostics.get("sum_ok", False)

    def report(self, g: WhrtGraph | None = None) -> str:
        lines = [
            f"constraint        {self.constraint}",
            f"sampling period h {self.h:.10g} s",
            f"c_walk            {self.c_walk}",
            f"start nodes       {self.diagnostics.get('starts', '?')}",
            "timing condition  i*h < t_max(gamma_i, Lambda_i):",
        ]
        for i, ih, tm, ok in self.timing:
            lines.append(f"  i={i}: {ih:.10g} < {tm:.10g}  {'ok' if ok else 'FAILS'}")
        lines.append(
            f"walk-sum condition max_P sum l*max(-eps_l, 2(L_l-Lambda_l)) = {self.worst_sum:.10g} "
            f"({'< 0 ok' if self.sum_ok else 'not negative: FAILS'})"
        )
        if self.worst_walk is not None:
            w = self.worst_walk
            labels = [g.edges[i].label for i in w.edges] if g is not None else None
            lines.append(f"  worst walk: start {w.start}, edges {list(w.edges)}, cost {w.cost}"
                         + (f", labels {labels}" if labels else ""))
        lines.append(f"  walks checked: {self.diagnostics.get('method', '?')}")
        if self.k3 is not None:
            lines.append(f"certified decay k3 = {self.k3:.10g} 1/s over windows of at most "
                         f"{self.diagnostics.get('h_bar', float('nan')):.10g} s")
        for f_ in self.failures:
            lines.append(f"failed: {f_}")
        lines.append(f"verdict: {self.verdict}")
        return "\n".join(lines)


def theorem1_certify(c: Constraint, h: float, c_walk: int, table: ParameterTable,
                     g: WhrtGraph | None = None, starts="all", method: str = "dp",
                     cap: int = DEFAULT_WALK_CAP) -> Certificate:
    """Decide the walk-sum stability certificate for sampling period ``h``.

    ``method="dp"`` maximizes the walk sum by dynamic programming over
    (node, remaining cost); ``method="enumerate"`` visits every walk of
    S(g, c_walk). Both use exact rational arithmetic on the rates. The
    factor ``h`` is positive and common to all terms, so the sign test
    runs on the label-weighted sum alone.
    """
    if not (isinstance(h, (int, float)) and h > 0 and math.isfinite(h)):
        raise ValueError("h must be positive")
    if c_walk < 1:
        raise ValueError("c_walk must be >= 1")
    w = max_consecutive_losses(c)
    if len(table) != w + 1:
        raise ValueError(f"parameter table needs exactly w+1 = {w + 1} rows, got {len(table)}")
    g = build_graph(c) if g is None else g
    nodes = resolve_starts(g, starts)
    if max(e.label for e in g.edges) > w + 1:
        raise ValueError("graph has a label beyond w(eta)+1")

    timing = []
    failures = []
    for i, p in table:
        tm = p.t_max
        ok = i * h <= tm * (1 - STRICT_RTOL)
        timing.append((i, i * h, tm, ok))
        if not ok:
            failures.append(f"timing condition at i={i}: {i}*h = {i * h:.10g} >= t_max = {tm:.10g}")

    coeff = _coefficients(table)
    if method == "dp":
        top, worst = _worst_walk_dp(g, c_walk, coeff, nodes)
    elif method == "enumerate":
        top, worst = _worst_walk_enum(g, c_walk, coeff, nodes, cap)
    else:
        raise ValueError(f"unknown method {method!r}")
    scale = sum(g.edges[i].label * abs(coeff[g.edges[i].label]) for i in worst.edges)
    sum_ok = top < -Fraction(STRICT_RTOL) * scale
    if not sum_ok:
        failures.append(f"walk sum {float(top):.10g} >= 0 on walk {list(worst.edges)} from node {worst.start}")

    has_decay_row = any(p.epsilon > 0 for _, p in table)
    certified = sum_ok and not any(not ok for *_, ok in timing)
    h_bar = h * (c_walk + w)
    k3 = None
    if certified:
        k3 = -math.expm1(h * float(top)) / h_bar
        assert k3 > 0
    diag = {
        "starts": "all" if starts in (None, "all") else starts,
        "n_starts": len(nodes),
        "method": method,
        "w_eta": w,
        "h_bar": h_bar,
        "sum_ok": sum_ok,
        "has_decay_row": has_decay_row,
        "rates": {i: float(r) for i, r in coeff.items()},
    }
    return Certificate(c, float(h), c_walk, table, certified, worst, float(top), k3,
                       timing, failures, diag)


@dataclass(frozen=True)
class HBound:
    h: float
    binding_index: int | None
    reason: str

    def __float__(self):
        return self.h


def max_certifiable_h(c: Constraint, c_walk: int, table: ParameterTable,
                      g: WhrtGraph | None = None, starts="all") -> HBound:
    """Largest ``h`` passing the timing condition, given the walk sum is negative.

    The walk-sum condition does not depend on ``h``; if it fails the
    result is zero.
    """
    w = max_consecutive_losses(c)
    if len(table) != w + 1:
        raise ValueError(f"parameter table needs exactly w+1 = {w + 1} rows, got {len(table)}")
    g = build_graph(c) if g is None else g
    top, worst = _worst_walk_dp(g, c_walk, _coefficients(table), resolve_starts(g, starts))
    scale = sum(g.edges[i].label * abs(table[g.edges[i].label].rate) for i in worst.edges)
    if not top < -Fraction(STRICT_RTOL) * Fraction(scale):
        return HBound(0.0, None, f"walk sum {float(top):.10g} is not negative for any h")
    limits = [(p.t_max * (1 - STRICT_RTOL) / i, i) for i, p in table]
    h, i = min(limits)
    return HBound(h, i, f"timing condition binds at gap length i={i}")


# -------------------------------------------------------------------- search

@dataclass(frozen=True)
class ParameterGrid:
    gammas: tuple[float, ...] = tuple(np.round(np.linspace(1.0, 8.0, 141), 10))
    epsilons: tuple[float, ...] = tuple(np.round(np.linspace(-6.0, 3.0, 181), 10))
    Lambdas: tuple[float, ...] = tuple(sorted(set(np.round(np.concatenate(
        [np.geomspace(1e-3, 0.1, 9), np.linspace(0.1, 6.0, 119)]), 10))))
    seeds: tuple[EmulationParams, ...] = ()


class InfeasibleError(Exception):
    def __init__(self, index: int, message: str):
        self.index = index
        super().__init__(message)


def _objective(eps: float, L: float, Lam: float) -> float:
    return growth_rate(eps, L, Lam)


def search_parameters(sys: ScalarPolySystem, c: Constraint, h: float,
                      grid: ParameterGrid = ParameterGrid(),
                      feas_grid: FeasibilityGrid = FeasibilityGrid()) -> ParameterTable:
    """Grid search for one parameter set per gap length ``i = 1..w+1``.

    Each row passes the grid assumption check with L = sys.L, satisfies
    ``t_max(gamma, Lambda) > i h`` and minimizes ``max(-eps, 2 (L - Lambda))``
    over the grid (plus any seeds). Raises :class:`InfeasibleError` naming
    the first gap length without a feasible point.
    """
    if not (grid.gammas and grid.epsilons and grid.Lambdas) and not grid.seeds:
        raise ValueError("parameter grid is empty")
    if not h > 0:
        raise ValueError("h must be positive")
    w = max_consecutive_losses(c)
    L = sys.L
    mg = _MarginGrid(sys, feas_grid)
    if float(mg.w_margin(L).min()) < -MARGIN_TOL:
        raise InfeasibleError(1, f"W-growth inequality fails for L={L} on the grid")
    if np.any(mg.V < -MARGIN_TOL):
        raise ValueError("V is negative on the feasibility grid")

    eps_sorted = sorted(set(grid.epsilons))

    def feasible(gamma, eps):
        return float(mg.v_margin(gamma, eps).min()) >= -MARGIN_TOL

    # Margins fall monotonically in eps (V >= 0), so bisect for the largest
    # feasible grid value per gamma.
    eps_star: dict[float, float] = {}
    for gamma in sorted(set(grid.gammas)):
        lo, hi = 0, len(eps_sorted) - 1
        if not feasible(gamma, eps_sorted[0]):
            continue
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if feasible(gamma, eps_sorted[mid]):
                lo = mid
            else:
                hi = mid - 1
        eps_star[gamma] = eps_sorted[lo]
    seeds = [s for s in grid.seeds if feasible(s.gamma, s.epsilon)]
    log.debug("feasible gammas: %d of %d, seeds kept: %d", len(eps_star), len(grid.gammas), len(seeds))

    lams = sorted(set(grid.Lambdas))
    rows = {}
    for i in range(1, w + 2):
        need = i * h
        best = None
        for gamma, eps in eps_star.items():
            for lam in lams:
                tm = t_max(gamma, lam)
                if not tm * (1 - STRICT_RTOL) > need:
                    continue
                key = (_objective(eps, L, lam), -tm)
                if best is None or key < best[0]:
                    best = (key, EmulationParams(gamma=gamma, L=L, Lambda=lam, epsilon=eps))
        for s in seeds:
            tm = t_max(s.gamma, s.Lambda)
            if tm * (1 - STRICT_RTOL) > need:
                key = (_objective(s.epsilon, L, s.Lambda), -tm)
                if best is None or key < best[0]:
                    best = (key, EmulationParams(gamma=s.gamma, L=L, Lambda=s.Lambda, epsilon=s.epsilon))
        if best is None:
            raise InfeasibleError(i, f"no feasible grid point with t_max > {i}*h = {need:.6g} s")
        rows[i] = best[1]
    return ParameterTable(rows)
