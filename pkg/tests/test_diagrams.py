import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fockmrf.algebra import MixedState
from fockmrf.diagrams import (
    InteractionWord,
    apply_power_directly,
    brute_force_expansion,
    evaluate_expansion,
    evaluate_word,
    expand_power,
    render_words,
)
from fockmrf.errors import CapacityError
from fockmrf.model import load_spec
from fockmrf.update import build_mrf_H

from conftest import occupancies, pairwise_specs


def test_square_of_two_pieces():
    words = {w.labels: w.coefficient for w in expand_power(2, 2)}
    assert words == {(): 1, (1,): 2, (2,): 2, (1, 1): 1, (1, 2): 1, (2, 1): 1, (2, 2): 1}


def test_zeroth_power():
    assert expand_power(5, 0) == [InteractionWord((), 1)]


def test_cube_matches_brute_force():
    words = expand_power(2, 3)
    assert sum(w.coefficient for w in words) == 27
    assert {w.labels: w.coefficient for w in words} == brute_force_expansion(2, 3)


@given(st.integers(1, 3), st.integers(0, 4))
def test_coefficient_law(n, k):
    words = expand_power(n, k)
    assert {w.labels: w.coefficient for w in words} == brute_force_expansion(n, k)
    for w in words:
        assert w.coefficient == math.comb(k, len(w.labels))
    keys = [(len(w.labels), w.labels) for w in words]
    assert keys == sorted(keys)


def test_power_guard():
    with pytest.raises(CapacityError):
        expand_power(2, 13)


def test_rendering():
    assert render_words([InteractionWord((1,), 2), InteractionWord((2,), 2)]) == "2 × H_1\n2 × H_2"
    assert render_words([InteractionWord((), 1)]) == "1 × I"
    lines = render_words(expand_power(2, 2)).splitlines()
    assert len(lines) == 7
    assert lines[3] == "1 × H_1·H_1"


def _toy():
    return build_mrf_H(load_spec({
        "nodes": 2, "bins": [2, 2], "source": {"2": [1, 3]},
        "two_cliques": [{"s": 1, "t": 2, "p": [[1, 2], [3, 1]]}],
    }))


def test_empty_word_scales_state():
    state = MixedState.pure(((1, 1), (2, 0)))
    assert evaluate_word(InteractionWord((), 3), _toy(), state) == state.scale(3)


def test_single_piece_word():
    H = _toy()
    state = MixedState.pure(((1, 0), (0, 1)))
    assert evaluate_word(InteractionWord((1,), 1), H, state) == H.apply_piece(1, state)
    assert evaluate_word(InteractionWord((1,), 1), H, state) == MixedState({((1, 0), (0, 1)): 2, ((0, 1), (0, 1)): 1})


def test_square_sum_equals_direct():
    H = _toy()
    state = MixedState.pure(((2, 0), (1, 1)))
    direct = apply_power_directly(H, state, 2)
    hh = H.apply(H.apply(state))
    assert direct == hh + H.apply(state).scale(2) + state
    assert evaluate_expansion(expand_power(2, 2), H, state) == direct


def test_order_matters():
    H = _toy()
    state = MixedState.pure(((2, 0), (1, 1)))
    assert evaluate_word(InteractionWord((1, 2), 1), H, state) != evaluate_word(InteractionWord((2, 1), 1), H, state)


@given(pairwise_specs(max_nodes=2, max_bins=2), st.integers(0, 4), st.data())
def test_expansion_identity(spec, k, data):
    H = build_mrf_H(spec)
    occ = data.draw(occupancies(spec.bins, max_total=2))
    state = MixedState.pure(occ)
    assert evaluate_expansion(expand_power(spec.num_nodes, k), H, state) == apply_power_directly(H, state, k)
