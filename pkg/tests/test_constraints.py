import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import all_sequences, consecutive_losses_bruteforce, satisfying_mask
from whrtcert.constraints import (
    Constraint,
    ConstraintParseError,
    Kind,
    any_n_in_m,
    harder_witness,
    is_extendable,
    is_harder,
    iter_satisfying,
    max_consecutive_losses,
    no_row_miss,
    parse_constraint,
    row_n_in_m,
    satisfies,
    window_ok,
)

KINDS = list(Kind)


@st.composite
def constraints(draw, max_m=8):
    m = draw(st.integers(1, max_m))
    n = draw(st.integers(1, m))
    return Constraint(draw(st.sampled_from(KINDS)), n, m)


@pytest.mark.parametrize("text,expected", [
    ("any:17/20", any_n_in_m(17, 20)),
    ("row:2/5", row_n_in_m(2, 5)),
    ("norowmiss:3/5", no_row_miss(3, 5)),
    ("  ANY: 3/4 ", any_n_in_m(3, 4)),
])
def test_parse(text, expected):
    assert parse_constraint(text) == expected


@pytest.mark.parametrize("text,col", [
    ("any17/20", 4),
    ("foo:1/2", 1),
    ("any:x/2", 5),
    ("any:3-4", 6),
    ("any:3/", 7),
    ("any:5/4", 5),
])
def test_parse_errors_report_column(text, col):
    with pytest.raises(ConstraintParseError) as exc:
        parse_constraint(text)
    assert exc.value.position + 1 == col
    assert f"column {col}" in str(exc.value)


@pytest.mark.parametrize("n,m", [(0, 3), (4, 3), (-1, 2)])
def test_invalid_bounds(n, m):
    with pytest.raises(ValueError):
        Constraint(Kind.ANY, n, m)


def test_str_roundtrip():
    for c in (any_n_in_m(17, 20), row_n_in_m(2, 5), no_row_miss(1, 1)):
        assert parse_constraint(str(c)) == c


@pytest.mark.parametrize("seq,c,ok", [
    ((1, 1, 0, 1, 1), any_n_in_m(4, 5), True),
    ((1, 0, 0, 1, 1), any_n_in_m(4, 5), False),
    ((1, 1, 0, 0, 0), row_n_in_m(2, 5), True),
    ((1, 0, 1, 0, 1), row_n_in_m(2, 5), False),
    ((1, 0, 1, 0, 1), no_row_miss(2, 5), True),
    ((1, 0, 0, 1, 1), no_row_miss(2, 5), False),
    ((0, 0), any_n_in_m(3, 5), True),
])
def test_satisfies_examples(seq, c, ok):
    assert satisfies(seq, c) is ok


def test_satisfies_rejects_empty():
    with pytest.raises(ValueError):
        satisfies((), any_n_in_m(1, 2))


@settings(max_examples=200, deadline=None)
@given(constraints(), st.lists(st.integers(0, 1), min_size=1, max_size=24))
def test_satisfies_matches_oracle(c, bits):
    arr = np.array([bits], dtype=np.int8)
    assert satisfies(bits, c) == bool(satisfying_mask(arr, c.kind.value, c.n, c.m)[0])


@settings(max_examples=100, deadline=None)
@given(constraints(max_m=6), st.data())
def test_window_ok_matches_oracle(c, data):
    w = data.draw(st.lists(st.integers(0, 1), min_size=c.m, max_size=c.m))
    arr = np.array([w], dtype=np.int8)
    assert window_ok(w, c) == bool(satisfying_mask(arr, c.kind.value, c.n, c.m)[0])


@pytest.mark.parametrize("m", range(1, 6))
@pytest.mark.parametrize("kind", KINDS)
def test_extendable_equals_exists_continuation(kind, m):
    # brute force over every continuation of length 2m instead of the all-ones shortcut
    for n in range(1, m + 1):
        c = Constraint(kind, n, m)
        L = m + 2
        tails = all_sequences(2 * m)
        for s in all_sequences(L):
            full = np.hstack([np.broadcast_to(s, (len(tails), L)), tails])
            exists = bool(satisfying_mask(full, kind.value, n, m).any())
            assert is_extendable(tuple(s), c) == exists


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("m", range(1, 8))
def test_max_consecutive_losses(kind, m):
    for n in range(1, m + 1):
        c = Constraint(kind, n, m)
        assert max_consecutive_losses(c) == consecutive_losses_bruteforce(kind.value, n, m, 2 * m)


@pytest.mark.parametrize("c,w", [
    (any_n_in_m(17, 20), 3),
    (row_n_in_m(2, 5), 3),
    (no_row_miss(3, 5), 2),
    (any_n_in_m(40, 50), 10),
    (row_n_in_m(10, 30), 20),
])
def test_w_values(c, w):
    assert max_consecutive_losses(c) == w


def test_iter_satisfying_matches_filter():
    c = row_n_in_m(2, 4)
    got = set(iter_satisfying(c, 9, first=1))
    seqs = all_sequences(9, first=1)
    want = {tuple(int(b) for b in r) for r in seqs[satisfying_mask(seqs, "row", 2, 4)]}
    assert got == want


@pytest.mark.parametrize("c1,c2,harder", [
    (row_n_in_m(2, 5), any_n_in_m(2, 5), True),
    (any_n_in_m(2, 5), row_n_in_m(2, 5), False),
    (any_n_in_m(4, 5), any_n_in_m(3, 5), True),
    (any_n_in_m(3, 5), any_n_in_m(3, 5), True),
])
def test_is_harder(c1, c2, harder):
    assert is_harder(c1, c2) is harder


def test_harder_witness():
    w = harder_witness(any_n_in_m(2, 5), row_n_in_m(2, 5))
    assert w is not None
    assert satisfies(w, any_n_in_m(2, 5)) and not satisfies(w, row_n_in_m(2, 5))
    assert harder_witness(row_n_in_m(2, 5), any_n_in_m(2, 5)) is None


def test_is_harder_short_horizon():
    with pytest.raises(ValueError):
        is_harder(any_n_in_m(2, 5), any_n_in_m(2, 5), horizon=3)
