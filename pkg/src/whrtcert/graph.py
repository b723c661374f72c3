"""WHRT graphs: labeled digraphs whose walks spell out admissible dropout patterns.

An edge with label ``l`` stands for one received input followed by ``l - 1``
dropouts. Concatenating the labels along an infinite walk from the initial
node reproduces every infinite sequence that starts with a reception and
satisfies the constraint.

Construction tracks the last ``m - 1`` emitted bits as the state, starting
from the empty history (nothing transmitted yet). From a state, label ``l``
is allowed when ``1 0^(l-1)`` can be appended without leaving the set of
prefixes of admissible infinite sequences. Language-equivalent states are
then merged by partition refinement. When the resulting language has
memory (more than one class), each class is split by the label of the gap
that led into it, so every node stands for "class, last gap"; the initial
node counts as entered by a gap of 1 since the first input is received.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .constraints import Constraint, is_extendable, iter_satisfying, max_consecutive_losses, window_ok

__all__ = [
    "Edge",
    "WhrtGraph",
    "InvalidWalkError",
    "ValidationReport",
    "build_graph",
    "generate_sequence",
    "validate_graph",
    "gap_sequence",
    "export_text",
    "parse_text",
    "export_dot",
]


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    label: int


class InvalidWalkError(ValueError):
    pass


@dataclass(frozen=True)
class WhrtGraph:
    """Immutable labeled digraph. Nodes are ``0..n_nodes-1``."""

    n_nodes: int
    edges: tuple[Edge, ...]
    initial: int = 0
    _out: tuple[tuple[int, ...], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        if not 0 <= self.initial < self.n_nodes:
            raise ValueError("initial node out of range")
        out: list[list[int]] = [[] for _ in range(self.n_nodes)]
        for idx, e in enumerate(self.edges):
            if not (0 <= e.src < self.n_nodes and 0 <= e.dst < self.n_nodes):
                raise ValueError(f"edge {idx} references a missing node")
            if e.label < 1:
                raise ValueError(f"edge {idx} has non-positive label {e.label}")
            out[e.src].append(idx)
        object.__setattr__(self, "_out", tuple(tuple(o) for o in out))

    @property
    def nodes(self) -> range:
        return range(self.n_nodes)

    def out_edges(self, node: int) -> tuple[int, ...]:
        """Indices of edges leaving ``node``, ascending."""
        return self._out[node]

    def in_degree(self, node: int) -> int:
        return sum(1 for e in self.edges if e.dst == node)

    def labels(self) -> list[int]:
        return sorted(e.label for e in self.edges)

    def degree_profile(self) -> list[tuple[int, int, tuple[int, ...], tuple[int, ...]]]:
        """Per-node (in, out, in-labels, out-labels), sorted; an isomorphism invariant."""
        prof = []
        for v in self.nodes:
            ins = tuple(sorted(e.label for e in self.edges if e.dst == v))
            outs = tuple(sorted(self.edges[i].label for i in self._out[v]))
            prof.append((len(ins), len(outs), ins, outs))
        return sorted(prof)

    def check_invariants(self, max_label: int | None = None) -> None:
        for v in self.nodes:
            if not self._out[v]:
                raise ValueError(f"node {v} has no outgoing edge")
        seen = {self.initial}
        todo = [self.initial]
        while todo:
            v = todo.pop()
            for i in self._out[v]:
                d = self.edges[i].dst
                if d not in seen:
                    seen.add(d)
                    todo.append(d)
        if len(seen) != self.n_nodes:
            raise ValueError("graph has nodes unreachable from the initial node")
        if max_label is not None and any(e.label > max_label for e in self.edges):
            raise ValueError(f"edge label exceeds bound {max_label}")


def _states_and_edges(c: Constraint):
    m = c.m
    max_label = max_consecutive_losses(c) + 1
    keep = m - 1
    tail = (1,) * m
    start: tuple[int, ...] = ()
    index = {start: 0}
    states = [start]
    trans: list[list[tuple[int, int]]] = [[]]
    queue = deque([start])
    while queue:
        s = queue.popleft()
        si = index[s]
        # One label past the bound is tried so the bound itself is checked.
        for label in range(1, max_label + 2):
            chunk = (1,) + (0,) * (label - 1)
            # s is extendable, so only windows touching the new bits matter;
            # an all-success tail is the most permissive continuation.
            probe = s + chunk + tail
            lo = max(0, len(s) + 1 - m)
            if not all(window_ok(probe[k:k + m], c) for k in range(lo, len(probe) - m + 1)):
                continue
            if label > max_label:
                raise AssertionError(f"label {label} exceeds w(eta)+1 for {c}")
            nxt = (s + chunk)[-keep:] if keep else ()
            if nxt not in index:
                index[nxt] = len(states)
                states.append(nxt)
                trans.append([])
                queue.append(nxt)
            trans[si].append((label, index[nxt]))
    return states, trans


def _minimize(n: int, trans: list[list[tuple[int, int]]], init: list[int]) -> list[int]:
    """Moore partition refinement from an initial partition; returns state -> block."""
    block = list(init)
    n_blocks = len(set(block))
    while True:
        sigs: dict[tuple, int] = {}
        new_block = []
        for v in range(n):
            sig = (block[v], tuple(sorted((lab, block[d]) for lab, d in trans[v])))
            new_block.append(sigs.setdefault(sig, len(sigs)))
        if len(sigs) == n_blocks:
            return new_block
        block, n_blocks = new_block, len(sigs)


def _tagged(states_trans: list[list[tuple[int, int]]]):
    """Split every state by the label of the edge entering it (initial: 1)."""
    index = {(0, 1): 0}
    trans: list[list[tuple[int, int]]] = [[]]
    queue = deque([(0, 1)])
    while queue:
        key = queue.popleft()
        for lab, d in states_trans[key[0]]:
            nk = (d, lab)
            if nk not in index:
                index[nk] = len(trans)
                trans.append([])
                queue.append(nk)
            trans[index[key]].append((lab, index[nk]))
    return trans


def build_graph(c: Constraint) -> WhrtGraph:
    """Construct a WHRT graph for ``c``.

    Node 0 is the initial node; nodes are numbered breadth-first from it and
    edges are ordered by (source node, label).
    """
    _, trans = _states_and_edges(c)
    block = _minimize(len(trans), trans, [0] * len(trans))
    if len(set(block)) > 1:
        trans = _tagged(trans)
        tags = [0] * len(trans)
        for src in trans:
            for lab, d in src:
                tags[d] = lab
        tags[0] = 1
        block = _minimize(len(trans), trans, tags)

    qtrans: dict[int, dict[int, int]] = {}
    for v, out in enumerate(trans):
        q = qtrans.setdefault(block[v], {})
        for lab, d in out:
            q[lab] = block[d]
    order = {block[0]: 0}
    queue = deque([block[0]])
    while queue:
        b = queue.popleft()
        for lab in sorted(qtrans[b]):
            d = qtrans[b][lab]
            if d not in order:
                order[d] = len(order)
                queue.append(d)
    edges = []
    for b, new_id in sorted(order.items(), key=lambda kv: kv[1]):
        for lab in sorted(qtrans[b]):
            edges.append(Edge(new_id, order[qtrans[b][lab]], lab))
    g = WhrtGraph(len(order), tuple(edges), 0)
    g.check_invariants(max_label=max_consecutive_losses(c) + 1)
    return g


def _check_walk(g: WhrtGraph, walk: Sequence[int], start: int | None = None) -> None:
    for k, idx in enumerate(walk):
        if not 0 <= idx < len(g.edges):
            raise InvalidWalkError(f"edge index {idx} out of range")
        if k == 0:
            if start is not None and g.edges[idx].src != start:
                raise InvalidWalkError(f"walk does not start at node {start}")
        elif g.edges[walk[k - 1]].dst != g.edges[idx].src:
            raise InvalidWalkError(f"edges {walk[k - 1]} and {idx} are not connected")


def generate_sequence(g: WhrtGraph, walk: Sequence[int], closed: bool = False) -> tuple[int, ...]:
    """Concatenate ``1 0^(l-1)`` over the edges of ``walk`` (0-based indices).

    The result has length equal to the walk cost. With ``closed=True`` the
    reception that starts the next edge is appended as a final ``1``.
    """
    walk = list(walk)
    _check_walk(g, walk)
    bits: list[int] = []
    for idx in walk:
        bits.append(1)
        bits.extend([0] * (g.edges[idx].label - 1))
    if closed:
        bits.append(1)
    return tuple(bits)


def gap_sequence(bits: Sequence[int]) -> tuple[list[int], int]:
    """Split a sequence starting with 1 into complete gaps plus a trailing partial gap length."""
    if not bits or bits[0] != 1:
        raise ValueError("sequence must start with 1")
    ones = [k for k, b in enumerate(bits) if b == 1]
    gaps = [b - a for a, b in zip(ones, ones[1:])]
    return gaps, len(bits) - ones[-1]


def walk_prefixes(g: WhrtGraph, length: int, start: int | None = None) -> set[tuple[int, ...]]:
    """All distinct length-``length`` prefixes of sequences generated from ``start``."""
    start = g.initial if start is None else start
    out: set[tuple[int, ...]] = set()
    stack: list[tuple[int, tuple[int, ...]]] = [(start, ())]
    while stack:
        node, bits = stack.pop()
        for idx in g.out_edges(node):
            e = g.edges[idx]
            nb = bits + (1,) + (0,) * (e.label - 1)
            if len(nb) >= length:
                out.add(nb[:length])
            else:
                stack.append((e.dst, nb))
    return out


@dataclass
class ValidationReport:
    constraint: Constraint
    horizon: int
    generated: int = 0
    admissible: int = 0
    soundness_failures: list[tuple[int, ...]] = field(default_factory=list)
    completeness_failures: list[tuple[int, ...]] = field(default_factory=list)
    partial: bool = False

    @property
    def passed(self) -> bool:
        return not self.soundness_failures and not self.completeness_failures

    def summary(self) -> str:
        status = "pass" if self.passed else "FAIL"
        scope = "soundness only" if self.partial else "soundness+completeness"
        lines = [
            f"validation {status} for {self.constraint} at horizon {self.horizon} ({scope})",
            f"  generated prefixes: {self.generated}, admissible sequences: {self.admissible}",
            f"  soundness counterexamples: {len(self.soundness_failures)}",
            f"  completeness counterexamples: {len(self.completeness_failures)}",
        ]
        for s in self.soundness_failures[:3]:
            lines.append("    unsound: " + "".join(map(str, s)))
        for s in self.completeness_failures[:3]:
            lines.append("    missing: " + "".join(map(str, s)))
        return "\n".join(lines)


def validate_graph(g: WhrtGraph, c: Constraint, horizon: int, completeness: bool = True,
                   max_witnesses: int = 20) -> ValidationReport:
    """Compare walk-generated prefixes with brute-force admissible sequences.

    Admissible means: length ``horizon``, starts with 1, satisfies ``c`` and
    can be continued forever (the finite prefixes of infinite sequences
    are what a WHRT graph generates). ``completeness=False`` runs the
    soundness half only, for constraints too large to enumerate.
    """
    if horizon < 2 * c.m and completeness:
        raise ValueError(f"horizon must be >= 2m = {2 * c.m}")
    rep = ValidationReport(c, horizon, partial=not completeness)
    gen = walk_prefixes(g, horizon)
    rep.generated = len(gen)
    for s in sorted(gen):
        if not is_extendable(s, c):
            if len(rep.soundness_failures) < max_witnesses:
                rep.soundness_failures.append(s)
            else:
                break
    if completeness:
        admissible = [s for s in iter_satisfying(c, horizon, first=1) if is_extendable(s, c)]
        rep.admissible = len(admissible)
        for s in admissible:
            if s not in gen:
                rep.completeness_failures.append(s)
                if len(rep.completeness_failures) >= max_witnesses:
                    break
    return rep


def export_text(g: WhrtGraph) -> str:
    lines = [f"# whrt graph: {g.n_nodes} nodes, {len(g.edges)} edges", f"initial {g.initial}"]
    lines += [f"{e.src} {e.dst} {e.label}" for e in g.edges]
    return "\n".join(lines) + "\n"


def parse_text(text: str) -> WhrtGraph:
    """Inverse of :func:`export_text`. Node count is inferred from the edges."""
    initial = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "initial":
            if len(parts) != 2 or initial is not None:
                raise ValueError(f"line {lineno}: bad initial header")
            initial = int(parts[1])
            continue
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 'from to label'")
        try:
            edges.append(Edge(*(int(p) for p in parts)))
        except ValueError:
            raise ValueError(f"line {lineno}: non-integer field") from None
    if initial is None:
        raise ValueError("missing 'initial <node>' header")
    n = max([initial] + [max(e.src, e.dst) for e in edges]) + 1
    return WhrtGraph(n, tuple(edges), initial)


def export_dot(g: WhrtGraph, name: str = "whrt") -> str:
    lines = [f"digraph {name} {{", "  rankdir=LR;", f"  v{g.initial} [shape=doublecircle];"]
    for idx, e in enumerate(g.edges):
        lines.append(f'  v{e.src} -> v{e.dst} [label="e{idx} (l={e.label})"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def graph_from_edges(edges: Iterable[tuple[int, int, int]], initial: int = 0) -> WhrtGraph:
    edges = tuple(Edge(*e) for e in edges)
    n = max([initial] + [max(e.src, e.dst) for e in edges]) + 1
    return WhrtGraph(n, edges, initial)
