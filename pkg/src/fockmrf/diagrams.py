"""Expansion of ``(I + H_1 + ... + H_N)^k`` into ordered interaction words.

Identity factors are absorbed, so a product of ``k`` factors collapses to the
ordered word of its non-identity pieces. A word of length ``l`` arises from
``C(k, l)`` placements of the identities, which is its coefficient.
"""

from __future__ import annotations

import itertools
import math
from typing import NamedTuple, Sequence

from .algebra import MixedState
from .errors import CapacityError

MAX_POWER = 12


class InteractionWord(NamedTuple):
    labels: tuple  # node labels, leftmost applied last
    coefficient: int

    def __str__(self) -> str:
        return render_word(self)


def expand_power(n_pieces: int | Sequence[int], k: int) -> list:
    """All words of ``(I + sum H_s)^k`` sorted by length then lexicographically.

    ``n_pieces`` is a piece count (labels ``1..N``) or an explicit label list.
    """
    if not 0 <= k <= MAX_POWER:
        raise CapacityError(f"power {k} outside 0..{MAX_POWER}", k)
    labels = tuple(range(1, n_pieces + 1)) if isinstance(n_pieces, int) else tuple(sorted(n_pieces))
    words = []
    for length in range(k + 1):
        coeff = math.comb(k, length)
        for w in itertools.product(labels, repeat=length):
            words.append(InteractionWord(w, coeff))
    return words


def brute_force_expansion(n_pieces: int, k: int) -> dict:
    """Collapse every ordered product of ``k`` factors from ``{I, H_1..H_N}``; oracle for :func:`expand_power`."""
    counts: dict = {}
    for seq in itertools.product(range(n_pieces + 1), repeat=k):
        word = tuple(x for x in seq if x)
        counts[word] = counts.get(word, 0) + 1
    return counts


def evaluate_word(word: InteractionWord, H, state: MixedState) -> MixedState:
    """Apply the word's pieces right to left, then scale by its coefficient."""
    out = state
    for s in reversed(word.labels):
        out = H.apply_piece(s, out)
    return out.scale(word.coefficient)


def evaluate_expansion(words: Sequence[InteractionWord], H, state: MixedState) -> MixedState:
    out = MixedState.zero(state.layout)
    for w in words:
        out = out + evaluate_word(w, H, state)
    return out


def apply_power_directly(H, state: MixedState, k: int) -> MixedState:
    """``(I + H)^k state`` by repeated application of the full operator."""
    out = state
    for _ in range(k):
        out = out + H.apply(out)
    return out


def render_word(word: InteractionWord) -> str:
    body = "·".join(f"H_{s}" for s in word.labels) if word.labels else "I"
    return f"{word.coefficient} × {body}"


def render_words(words: Sequence[InteractionWord]) -> str:
    return "\n".join(render_word(w) for w in words)


__all__ = [
    "MAX_POWER",
    "InteractionWord",
    "expand_power",
    "brute_force_expansion",
    "evaluate_word",
    "evaluate_expansion",
    "apply_power_directly",
    "render_word",
    "render_words",
]
