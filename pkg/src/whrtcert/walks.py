"""Enumeration of the walk set S(G, c_walk).

S(G, c_walk) holds every finite walk whose cost reaches ``c_walk`` exactly
on its last edge: total cost >= c_walk while the cost without the last edge
is < c_walk. Walks are enumerated depth first in ascending edge index, so
the output is lexicographic per start node.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

from .graph import WhrtGraph

__all__ = [
    "Walk",
    "WalkSetTooLarge",
    "DEFAULT_WALK_CAP",
    "iter_walk_set",
    "enumerate_walk_set",
    "walk_cost_bounds",
    "format_walk",
    "resolve_starts",
    "thread_count",
]

DEFAULT_WALK_CAP = 10_000_000
THREADS_ENV = "WHRTCERT_THREADS"


class WalkSetTooLarge(RuntimeError):
    pass


@dataclass(frozen=True, order=True)
class Walk:
    start: int
    edges: tuple[int, ...]
    cost: int

    def labels(self, g: WhrtGraph) -> list[int]:
        return [g.edges[i].label for i in self.edges]

    def end(self, g: WhrtGraph) -> int:
        return g.edges[self.edges[-1]].dst


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def resolve_starts(g: WhrtGraph, starts) -> list[int]:
    """``None``/``"all"`` -> every node, ``"initial"`` -> the initial node."""
    if starts is None or starts == "all":
        return list(g.nodes)
    if starts == "initial":
        return [g.initial]
    out = sorted(set(int(s) for s in starts))
    if not out:
        raise ValueError("start node set must be non-empty")
    for s in out:
        if not 0 <= s < g.n_nodes:
            raise ValueError(f"start node {s} not in graph")
    return out


def _walks_from(g: WhrtGraph, start: int, c_walk: int) -> Iterator[Walk]:
    edges = g.edges
    path: list[int] = []
    # Stack of (node, cost so far, iterator position over out edges).
    stack = [(start, 0, 0)]
    while stack:
        node, cost, pos = stack[-1]
        out = g.out_edges(node)
        if pos >= len(out):
            stack.pop()
            if path:
                path.pop()
            continue
        stack[-1] = (node, cost, pos + 1)
        idx = out[pos]
        new_cost = cost + edges[idx].label
        if new_cost >= c_walk:
            yield Walk(start, tuple(path) + (idx,), new_cost)
        else:
            path.append(idx)
            stack.append((edges[idx].dst, new_cost, 0))


def iter_walk_set(g: WhrtGraph, c_walk: int, starts=None) -> Iterator[Walk]:
    """Lazily yield S(g, c_walk) restricted to ``starts``, in deterministic order."""
    if c_walk < 1:
        raise ValueError("c_walk must be >= 1")
    for s in resolve_starts(g, starts):
        yield from _walks_from(g, s, c_walk)


def enumerate_walk_set(g: WhrtGraph, c_walk: int, starts=None, cap: int = DEFAULT_WALK_CAP,
                       workers: int | None = None) -> list[Walk]:
    """Materialize S(g, c_walk); raises :class:`WalkSetTooLarge` past ``cap`` walks."""
    if c_walk < 1:
        raise ValueError("c_walk must be >= 1")
    nodes = resolve_starts(g, starts)
    workers = thread_count() if workers is None else workers

    def collect(s: int) -> list[Walk]:
        out = []
        for w in _walks_from(g, s, c_walk):
            out.append(w)
            if len(out) > cap:
                raise WalkSetTooLarge(f"walk set too large (more than {cap} walks)")
        return out

    if workers > 1 and len(nodes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(collect, nodes))
    else:
        parts = [collect(s) for s in nodes]
    result: list[Walk] = []
    for p in parts:
        result.extend(p)
        if len(result) > cap:
            raise WalkSetTooLarge(f"walk set too large (more than {cap} walks)")
    return result


def walk_cost_bounds(g: WhrtGraph, c_walk: int, w_eta: int, starts=None) -> tuple[int, int]:
    """Observed (min, max) walk cost over S(g, c_walk), asserting the [c, c + w] window."""
    lo = hi = None
    for w in iter_walk_set(g, c_walk, starts):
        if not c_walk <= w.cost <= c_walk + w_eta:
            raise AssertionError(f"walk {w} has cost outside [{c_walk}, {c_walk + w_eta}]")
        lo = w.cost if lo is None else min(lo, w.cost)
        hi = w.cost if hi is None else max(hi, w.cost)
    if lo is None:
        raise ValueError("walk set is empty")
    return lo, hi


def format_walk(w: Walk) -> str:
    return f"{w.start}: {','.join(map(str, w.edges))} cost={w.cost}"


def parse_walk_line(line: str) -> Walk:
    head, _, rest = line.partition(":")
    body, _, cost = rest.strip().partition(" cost=")
    return Walk(int(head), tuple(int(x) for x in body.split(",")), int(cost))


def dump_walks(walks: Iterable[Walk]) -> str:
    return "".join(format_walk(w) + "\n" for w in walks)


def walk_label_sum(labels: Sequence[int], coeff) -> float:
    """Sum of ``l * coeff[l]`` over a label sequence."""
    return sum(l * coeff[l] for l in labels)
