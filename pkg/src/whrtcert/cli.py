"""Command-line front end.

Exit code 0 means the requested check passed and 1 means it failed. Bad
input exits with 2 and a line or column diagnostic where one exists.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import time
from collections import Counter
from pathlib import Path

import numpy as np

from .certify import (
    GRID_CAVEAT,
    FeasibilityGrid,
    InfeasibleError,
    ParameterTable,
    ParamsParseError,
    check_assumption2,
    max_certifiable_h,
    max_dropout_bound,
    parse_params_text,
    reference_table,
    search_parameters,
    theorem1_certify,
    walk_sum,
)
from .constraints import max_consecutive_losses, parse_constraint
from .emulation import EmulationParams, t_max, t_max_branch, t_tilde_max
from .graph import build_graph, export_dot, export_text, parse_text, validate_graph
from .sim import (
    DdsConfig,
    SimulationDiverged,
    gen_sequence_from_graph,
    simulate,
    validate_prop1_windows,
    validate_prop2_bounds,
    walk_window_times,
)
from .systems import parse_system
from .walks import WalkSetTooLarge, dump_walks, enumerate_walk_set

log = logging.getLogger("whrtcert")

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2

# Published reference values for the cubic example under any:17/20.
REF_BASELINE_H = 0.125
REF_CERTIFIED_H = 0.195
REF_RATIO = 1.56
REF_TMAX = {1: 0.211, 2: 0.428, 3: 0.605, 4: 0.787}


class CliError(Exception):
    """Input problem reported with exit code 2."""


def fmt(x: float) -> str:
    return f"{x:.10g}"


def parse_params_file(path) -> ParameterTable:
    """Read a parameter table file: rows ``i gamma L Lambda epsilon``, ``#`` comments."""
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{p}: no such parameter file")
    try:
        return parse_params_text(p.read_text())
    except ParamsParseError as exc:
        raise CliError(f"{p}:{exc.line or 0}: {exc}") from None


def _table(args) -> ParameterTable:
    return parse_params_file(args.params) if args.params else reference_table()


def _starts(text: str):
    if text in ("all", "initial"):
        return text
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise CliError(f"--starts: expected 'all', 'initial' or a comma list of node ids, got {text!r}") from None


def _write(path: str | None, text: str) -> None:
    if path is None:
        return
    if path == "-":
        sys.stdout.write(text)
        return
    Path(path).write_text(text)
    log.info("wrote %s", path)


# ---------------------------------------------------------------- commands

def cmd_graph(args) -> int:
    if args.load:
        g = parse_text(Path(args.load).read_text())
        c = parse_constraint(args.constraint) if args.constraint else None
    else:
        if not args.constraint:
            raise CliError("--constraint is required unless --load is given")
        c = parse_constraint(args.constraint)
        g = build_graph(c)
    print(f"nodes {g.n_nodes}")
    print(f"edges {len(g.edges)}")
    print(f"initial node {g.initial}")
    print("labels " + ",".join(map(str, sorted(g.labels()))))
    for idx, e in enumerate(g.edges):
        print(f"  e{idx}: {e.src} -> {e.dst} label {e.label}")
    _write(args.export, export_text(g))
    _write(args.dot, export_dot(g))
    status = EXIT_OK
    if args.validate is not None:
        if c is None:
            raise CliError("--validate needs --constraint")
        full = args.validate >= 2 * c.m and c.m <= args.max_brute_m
        rep = validate_graph(g, c, args.validate, completeness=full)
        print(rep.summary())
        status = EXIT_OK if rep.passed else EXIT_FAIL
    return status


def cmd_walks(args) -> int:
    c = parse_constraint(args.constraint)
    g = build_graph(c)
    w = max_consecutive_losses(c)
    walks = enumerate_walk_set(g, args.cwalk, _starts(args.starts))
    costs = Counter(wk.cost for wk in walks)
    print(f"graph: {g.n_nodes} nodes, {len(g.edges)} edges; w = {w}")
    print(f"walks in S(G, {args.cwalk}): {len(walks)}")
    print(f"cost range [{min(costs)}, {max(costs)}] (bound [{args.cwalk}, {args.cwalk + w}])")
    for cost in sorted(costs):
        print(f"  cost {cost}: {costs[cost]}")
    _write(args.dump, dump_walks(walks))
    if args.histogram:
        table = _table(args)
        sums = np.array([walk_sum(g, wk, table) for wk in walks])
        values, counts = np.unique(np.round(sums, 9), return_counts=True)
        lines = ["walk_sum,count"] + [f"{fmt(v)},{n}" for v, n in zip(values, counts)]
        _write(args.histogram, "\n".join(lines) + "\n")
        print(f"walk sums in [{fmt(sums.min())}, {fmt(sums.max())}]")
    return EXIT_OK


def cmd_tmax(args) -> int:
    value = t_max(args.gamma, args.lambda_cap)
    print(f"t_max {fmt(value)}")
    print(f"branch {t_max_branch(args.gamma, args.lambda_cap)}")
    if args.lam is not None:
        print(f"t_tilde_max {fmt(t_tilde_max(args.lam, args.gamma, args.lambda_cap))}")
    return EXIT_OK


def _grid(args) -> FeasibilityGrid:
    return FeasibilityGrid(args.xmax, args.emax, args.points)


def cmd_feasibility(args) -> int:
    sysm = parse_system(args.system)
    grid = _grid(args)
    if args.gamma is not None:
        if args.epsilon is None:
            raise CliError("--gamma needs --epsilon")
        L = sysm.L if args.L is None else args.L
        rows = [(0, EmulationParams(args.gamma, L, args.lambda_cap or 1.0, args.epsilon))]
    else:
        rows = list(_table(args))
    ok = True
    for i, p in rows:
        rep = check_assumption2(sysm, p, grid)
        label = f"row {i}: " if i else ""
        print(label + rep.summary().replace(f"\n  note: {GRID_CAVEAT}", ""))
        ok &= rep.feasible
    print(f"note: {GRID_CAVEAT}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_certify(args) -> int:
    c = parse_constraint(args.constraint)
    g = build_graph(c)
    if args.search:
        if not args.system:
            raise CliError("--search needs --system")
        try:
            table = search_parameters(parse_system(args.system), c, args.h)
        except InfeasibleError as exc:
            print(f"parameter search failed at gap length {exc.index}: {exc}")
            print("verdict: not-certified")
            return EXIT_FAIL
        print("searched parameter table (i gamma L Lambda epsilon):")
        print(table.to_text().rstrip())
    else:
        table = _table(args)
    cert = theorem1_certify(c, args.h, args.cwalk, table, g=g, starts=_starts(args.starts),
                            method=args.method)
    print(cert.report(g))
    bound = max_certifiable_h(c, args.cwalk, table, g=g, starts=_starts(args.starts))
    print(f"largest certifiable h {fmt(bound.h)} s ({bound.reason})")
    feasible = True
    if args.system and not args.search:
        sysm = parse_system(args.system)
        for i, p in table:
            rep = check_assumption2(sysm, p, _grid(args))
            print(f"assumption check row {i}: {'feasible' if rep.feasible else 'INFEASIBLE'} "
                  f"(V margin {rep.v_margin:.6g}, W margin {rep.w_margin:.6g})")
            feasible &= rep.feasible
        print(f"note: {GRID_CAVEAT}")
    return EXIT_OK if cert.certified and feasible else EXIT_FAIL


def _bits(text: str) -> tuple[int, ...]:
    s = text.replace(",", "").replace(" ", "")
    for k, ch in enumerate(s):
        if ch not in "01":
            raise CliError(f"--sequence: column {k + 1}: expected 0 or 1, got {ch!r}")
    return tuple(int(ch) for ch in s)


def cmd_simulate(args) -> int:
    sysm = parse_system(args.system)
    n_periods = int(math.ceil(args.t_end / args.h - 1e-9)) + 1
    table = None
    if args.sequence:
        seq = _bits(args.sequence)
    else:
        if not args.constraint:
            raise CliError("give --sequence or --constraint")
        c = parse_constraint(args.constraint)
        g = build_graph(c)
        table = _table(args)
        seq = gen_sequence_from_graph(g, n_periods, mode=args.mode, seed=args.seed, table=table,
                                      c_walk=args.cwalk, constraint=c)
    cfg = DdsConfig(sysm, args.h, args.x0, seq, args.t_end, args.steps)
    try:
        trace = simulate(cfg)
    except SimulationDiverged as exc:
        print(f"simulation diverged: {exc}")
        _write(args.csv, exc.trace.to_csv())
        return EXIT_FAIL
    _write(args.csv, trace.to_csv())
    print(f"samples {len(trace.t)}, receptions {len(trace.receptions)}")
    print(f"x(t_end) {fmt(trace.x[-1])}, V(t_end) {fmt(trace.V[-1])}")
    status = EXIT_OK
    if args.check:
        table = table or _table(args)
        rep = validate_prop2_bounds(trace, table, with_u=True)
        print(rep.summary())
        wrep = validate_prop1_windows(trace, walk_window_times(trace, args.cwalk))
        print(wrep.summary())
        if rep.fraction_ok < 1 or not wrep.all_decrease:
            status = EXIT_FAIL
    return status


def cmd_reproduce(args) -> int:
    t0 = time.perf_counter()
    c = parse_constraint("any:17/20")
    h, c_walk = REF_CERTIFIED_H, 20
    g = build_graph(c)
    table = reference_table()
    sysm = parse_system("example")
    rows = []

    for i, p in table:
        rows.append((f"t_max row {i} [s]", REF_TMAX[i], t_max(p.gamma, p.Lambda), 1e-3))
    base = max_dropout_bound(c, 2.0, 2.0)
    rows.append(("baseline h [s]", REF_BASELINE_H, base, 1e-6))
    cert = theorem1_certify(c, h, c_walk, table, g=g)
    bound = max_certifiable_h(c, c_walk, table, g=g)
    rows.append(("certified at h=0.195", "certified", cert.verdict, None))
    rows.append(("largest certifiable h [s]", ">= 0.195", bound.h, None))
    rows.append(("improvement ratio", f">= {REF_RATIO}", h / base, None))
    feas = [check_assumption2(sysm, p).feasible for _, p in table]
    rows.append(("assumption check rows 1-4", "feasible", "feasible" if all(feas) else "INFEASIBLE", None))

    n_periods = int(round(args.t_end / h)) + 1
    seq = gen_sequence_from_graph(g, n_periods, mode="worst", table=table, c_walk=c_walk, constraint=c)
    trace = simulate(DdsConfig(sysm, h, 1.0, seq, args.t_end, 50))
    p2 = validate_prop2_bounds(trace, table)
    p1 = validate_prop1_windows(trace, walk_window_times(trace, c_walk), k3=cert.k3)
    rows.append(("intervals within exp bound", "all", f"{100 * p2.fraction_ok:.6g}%", None))
    rows.append(("window boundaries decreasing", "all", f"{sum(w.decreased for w in p1.windows)}"
                 f"/{len(p1.windows)}", None))

    print(f"{'quantity':32s} {'reference':>12s} {'computed':>14s}  match")
    for name, ref, val, tol in rows:
        if tol is not None:
            match = "yes" if abs(val - ref) <= tol else "NO"
            print(f"{name:32s} {ref:>12.6g} {val:>14.6g}  {match}")
        else:
            v = fmt(val) if isinstance(val, float) else str(val)
            print(f"{name:32s} {ref!s:>12s} {v:>14s}")
    print(f"worst walk sum {fmt(cert.worst_sum)}, k3 {fmt(cert.k3)} 1/s")
    if args.outdir:
        out = Path(args.outdir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "graph_any_17_20.txt").write_text(export_text(g))
        (out / "certificate.txt").write_text(cert.report(g) + "\n")
        (out / "worst_case_trace.csv").write_text(trace.to_csv())
        (out / "params.cfg").write_text(table.to_text())
        print(f"artifacts written to {out}")
    print(f"elapsed {time.perf_counter() - t0:.3g} s")
    return EXIT_OK if cert.certified else EXIT_FAIL


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="whrtcert",
                                 description="Stability certificates for sampled-data loops under weakly hard dropouts.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def add_params(p):
        p.add_argument("--params", help="parameter file (rows: i gamma L Lambda epsilon); default: built-in table")

    def add_grid(p):
        p.add_argument("--xmax", type=float, default=5.0)
        p.add_argument("--emax", type=float, default=5.0)
        p.add_argument("--points", type=int, default=500, help="grid points per axis")

    p = sub.add_parser("graph", help="build, validate and export a WHRT graph")
    p.add_argument("--constraint", help="e.g. any:17/20, row:2/5, norowmiss:3/5")
    p.add_argument("--validate", type=int, metavar="HORIZON")
    p.add_argument("--max-brute-m", type=int, default=12,
                   help="largest m for the exhaustive completeness check")
    p.add_argument("--export", metavar="PATH", help="edge list output ('-' for stdout)")
    p.add_argument("--dot", metavar="PATH", help="Graphviz output ('-' for stdout)")
    p.add_argument("--load", metavar="PATH", help="read an exported edge list instead of building")
    p.set_defaults(func=cmd_graph)

    p = sub.add_parser("walks", help="enumerate S(G, c_walk)")
    p.add_argument("--constraint", required=True)
    p.add_argument("--cwalk", type=int, required=True)
    p.add_argument("--starts", default="all", help="all | initial | comma list of nodes")
    p.add_argument("--dump", metavar="PATH")
    p.add_argument("--histogram", metavar="PATH", help="CSV of walk sums")
    add_params(p)
    p.set_defaults(func=cmd_walks)

    p = sub.add_parser("tmax", help="maximum time between received inputs")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--lambda-cap", type=float, required=True, help="the Lambda parameter")
    p.add_argument("--lam", type=float, help="also print t_tilde_max for this lambda in (0, 1)")
    p.set_defaults(func=cmd_tmax)

    p = sub.add_parser("feasibility", help="grid check of the growth inequalities")
    p.add_argument("--system", default="example")
    p.add_argument("--gamma", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--L", type=float)
    p.add_argument("--lambda-cap", type=float)
    add_params(p)
    add_grid(p)
    p.set_defaults(func=cmd_feasibility)

    p = sub.add_parser("certify", help="decide the walk-sum certificate")
    p.add_argument("--constraint", required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--cwalk", type=int, required=True)
    p.add_argument("--starts", default="all")
    p.add_argument("--method", choices=("dp", "enumerate"), default="dp")
    p.add_argument("--system", help="also grid-check every parameter row for this system")
    p.add_argument("--search", action="store_true", help="derive parameters by grid search for --system")
    add_params(p)
    add_grid(p)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("simulate", help="simulate the loop for a dropout sequence")
    p.add_argument("--system", default="example")
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--x0", type=float, default=1.0)
    p.add_argument("--t-end", type=float, default=10.0)
    p.add_argument("--steps", type=int, default=50, help="RK4 steps per sampling period (>= 50)")
    p.add_argument("--sequence", help="explicit 0/1 sequence, one bit per period")
    p.add_argument("--constraint", help="generate the sequence from this constraint's graph")
    p.add_argument("--mode", choices=("random", "worst"), default="random")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cwalk", type=int, default=20)
    p.add_argument("--csv", metavar="PATH", help="trace output (t,x,e,V,received)")
    p.add_argument("--check", action="store_true", help="check the per-interval and window bounds")
    add_params(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reproduce-paper", help="rerun the any:17/20 reference workflow")
    p.add_argument("--outdir")
    p.add_argument("--t-end", type=float, default=60.0)
    p.set_defaults(func=cmd_reproduce)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (CliError, WalkSetTooLarge, ValueError, OSError) as exc:
        # parse errors subclass ValueError and carry their own line/column
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
