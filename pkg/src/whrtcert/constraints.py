"""Weakly hard real-time (WHRT) dropout constraints.

A transmission sequence is a string of bits where ``1`` means the control
input arrived at that sampling instant and ``0`` means it was dropped.
Three window constraint families are supported:

``any:n/m``
    at least ``n`` successes in every window of ``m`` consecutive slots.
``row:n/m``
    at least ``n`` *consecutive* successes in every window of ``m``.
``norowmiss:n/m``
    never ``n`` consecutive misses inside a window of ``m``.

Constraints are defined on infinite sequences. Finite sequences are checked
against every window of length ``m`` that fits inside them; a sequence
shorter than ``m`` is therefore vacuously admissible.
"""

from __future__ import annotations

import enum
import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

__all__ = [
    "Kind",
    "Constraint",
    "ConstraintParseError",
    "any_n_in_m",
    "row_n_in_m",
    "no_row_miss",
    "parse_constraint",
    "satisfies",
    "window_ok",
    "is_extendable",
    "max_consecutive_losses",
    "is_harder",
    "iter_satisfying",
]

# Above this window size w(eta) comes from the closed form instead of
# enumerating all 2**m windows.
BRUTE_FORCE_MAX_M = 12


class Kind(str, enum.Enum):
    ANY = "any"
    ROW = "row"
    NO_ROW_MISS = "norowmiss"


@dataclass(frozen=True, order=True)
class Constraint:
    kind: Kind
    n: int
    m: int

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind(self.kind))
        if isinstance(self.n, bool) or isinstance(self.m, bool):
            raise ValueError("n and m must be integers")
        if int(self.n) != self.n or int(self.m) != self.m:
            raise ValueError(f"n and m must be integers, got n={self.n!r}, m={self.m!r}")
        if not 1 <= self.n <= self.m:
            raise ValueError(f"constraint requires 1 <= n <= m, got n={self.n}, m={self.m}")

    def __str__(self) -> str:
        return f"{self.kind.value}:{self.n}/{self.m}"


def any_n_in_m(n: int, m: int) -> Constraint:
    return Constraint(Kind.ANY, n, m)


def row_n_in_m(n: int, m: int) -> Constraint:
    return Constraint(Kind.ROW, n, m)


def no_row_miss(n: int, m: int) -> Constraint:
    return Constraint(Kind.NO_ROW_MISS, n, m)


class ConstraintParseError(ValueError):
    """Raised for malformed constraint text; ``position`` is 0-based."""

    def __init__(self, text: str, position: int, expected: str):
        self.text = text
        self.position = position
        self.expected = expected
        super().__init__(
            f"cannot parse constraint {text!r} at column {position + 1}: expected {expected}"
        )


_KIND_ALIASES = {
    "any": Kind.ANY,
    "row": Kind.ROW,
    "norowmiss": Kind.NO_ROW_MISS,
}


def parse_constraint(text: str) -> Constraint:
    """Parse ``kind:n/m`` (e.g. ``any:17/20``) into a :class:`Constraint`."""
    s = text.strip()
    offset = len(text) - len(text.lstrip())
    colon = s.find(":")
    if colon < 0:
        m = re.match(r"[A-Za-z]*", s)
        raise ConstraintParseError(text, offset + m.end(), "':' after constraint kind")
    kind_txt = s[:colon].strip().lower()
    if kind_txt not in _KIND_ALIASES:
        raise ConstraintParseError(text, offset, "one of 'any', 'row', 'norowmiss'")
    rest = s[colon + 1:]
    pos = offset + colon + 1
    m1 = re.match(r"\s*(\d+)", rest)
    if not m1:
        raise ConstraintParseError(text, pos, "positive integer n")
    pos2 = m1.end()
    if pos2 >= len(rest) or rest[pos2] != "/":
        raise ConstraintParseError(text, pos + pos2, "'/'")
    m2 = re.match(r"(\d+)\s*$", rest[pos2 + 1:])
    if not m2:
        raise ConstraintParseError(text, pos + pos2 + 1, "positive integer m and end of input")
    n, m = int(m1.group(1)), int(m2.group(1))
    try:
        return Constraint(_KIND_ALIASES[kind_txt], n, m)
    except ValueError as exc:
        raise ConstraintParseError(text, pos, f"1 <= n <= m ({exc})") from None


def _longest_run(bits: Sequence[int], value: int) -> int:
    best = cur = 0
    for b in bits:
        if b == value:
            cur += 1
            if cur > best:
                best = cur
        else:
            cur = 0
    return best


def window_ok(window: Sequence[int], c: Constraint) -> bool:
    """Check the kind-specific condition on a single window of length ``c.m``."""
    if c.kind is Kind.ANY:
        return sum(window) >= c.n
    if c.kind is Kind.ROW:
        return _longest_run(window, 1) >= c.n
    return _longest_run(window, 0) < c.n


def _as_bits(seq: Iterable[int]) -> tuple[int, ...]:
    bits = tuple(int(b) for b in seq)
    if any(b not in (0, 1) for b in bits):
        raise ValueError("binary sequence may only contain 0 and 1")
    return bits


def satisfies(seq: Iterable[int], c: Constraint) -> bool:
    """True iff every length-``m`` window fully inside ``seq`` meets ``c``."""
    bits = _as_bits(seq)
    if not bits:
        raise ValueError("cannot check an empty sequence")
    m = c.m
    return all(window_ok(bits[k:k + m], c) for k in range(len(bits) - m + 1))


def is_extendable(seq: Iterable[int], c: Constraint) -> bool:
    """True iff ``seq`` is a prefix of some infinite sequence satisfying ``c``.

    For all three families an all-success tail is the most permissive
    continuation, so it suffices to append ``m`` ones and check.
    """
    bits = _as_bits(seq)
    return satisfies(bits + (1,) * c.m, c)


def iter_satisfying(c: Constraint, length: int, first: int | None = None) -> Iterator[tuple[int, ...]]:
    """Yield every binary sequence of ``length`` satisfying ``c``.

    Depth-first over prefixes; a violating prefix is never extended, which
    is exact because violations are prefix-monotone.
    """
    if length < 1:
        raise ValueError("length must be >= 1")
    m = c.m
    starts = (first,) if first is not None else (0, 1)
    stack: list[tuple[int, ...]] = [(b,) for b in reversed(starts)]
    while stack:
        prefix = stack.pop()
        k = len(prefix)
        if k >= m and not window_ok(prefix[k - m:], c):
            continue
        if k == length:
            yield prefix
            continue
        stack.append(prefix + (1,))
        stack.append(prefix + (0,))


def _max_losses_closed_form(c: Constraint) -> int:
    if c.kind is Kind.NO_ROW_MISS:
        return c.n - 1
    return c.m - c.n


def _max_losses_brute_force(c: Constraint) -> int:
    # A zero run longer than m would fill a whole window, which no family
    # admits, so the worst run always fits in one valid window.
    best = 0
    for window in itertools.product((0, 1), repeat=c.m):
        if window_ok(window, c):
            best = max(best, _longest_run(window, 0))
    return best


def max_consecutive_losses(c: Constraint) -> int:
    """Largest number of consecutive dropouts allowed by ``c``, w(eta)."""
    if c.kind is Kind.NO_ROW_MISS:
        return c.n - 1
    if c.m <= BRUTE_FORCE_MAX_M:
        return _max_losses_brute_force(c)
    return _max_losses_closed_form(c)


def is_harder(c1: Constraint, c2: Constraint, horizon: int | None = None) -> bool:
    """Finite-horizon check that every sequence satisfying ``c1`` satisfies ``c2``.

    All binary sequences of length ``horizon`` (default ``2*max(m1, m2)``)
    admitted by ``c1`` are enumerated.
    """
    mm = max(c1.m, c2.m)
    if horizon is None:
        horizon = 2 * mm
    if horizon < 2 * mm:
        raise ValueError(f"horizon must be >= 2*max(m1, m2) = {2 * mm}, got {horizon}")
    return all(satisfies(s, c2) for s in iter_satisfying(c1, horizon))


def harder_witness(c1: Constraint, c2: Constraint, horizon: int | None = None):
    """Return a sequence satisfying ``c1`` but not ``c2``, or ``None``."""
    mm = max(c1.m, c2.m)
    horizon = 2 * mm if horizon is None else horizon
    for s in iter_satisfying(c1, horizon):
        if not satisfies(s, c2):
            return s
    return None
