"""Bosonic creation/annihilation algebra on multiply occupied histograms.

Basis states are unnormalized Fock states ``prod_k (a_k^dagger)^{n_k} |0>``,
one histogram per node. A :class:`MixedState` is a finite weighted sum of
such basis states; an :class:`OperatorExpr` is a finite weighted sum of
operator words. Annihilating bin ``i`` of a histogram with ``n_i`` samples
multiplies the weight by ``n_i`` (there are ``n_i`` ways to pick the sample);
annihilating an empty bin drops the term.

Sites are 1-based ``(node, bin)`` pairs. Coefficients are exact
:class:`fractions.Fraction` (or ``int``) unless floats are passed in, in which
case arithmetic silently becomes floating point.
"""

from __future__ import annotations

import math
import re
from collections import defaultdict
from enum import IntEnum
from fractions import Fraction
from functools import lru_cache
from numbers import Rational
from typing import Iterable, Iterator, Mapping, NamedTuple, Sequence, Tuple, Union

Scalar = Union[Fraction, int, float]
Occupancy = Tuple[Tuple[int, ...], ...]
Layout = Tuple[int, ...]


class Kind(IntEnum):
    CREATE = 0
    ANNIHILATE = 1


class Site(NamedTuple):
    node: int
    bin: int


class Factor(NamedTuple):
    """``(a^dagger)^power`` or ``a^power`` at one site."""

    kind: Kind
    node: int
    bin: int
    power: int = 1

    @property
    def site(self) -> Site:
        return Site(self.node, self.bin)


Word = Tuple[Factor, ...]


# ---------------------------------------------------------------------------
# scalars


def to_scalar(value) -> Scalar:
    """Coerce ``value`` to a coefficient; ``"a/b"`` and decimal strings become exact."""
    if isinstance(value, bool):
        raise TypeError("booleans are not scalars")
    if isinstance(value, (Fraction, int, float)):
        return value
    if isinstance(value, Rational):
        return Fraction(value.numerator, value.denominator)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot interpret {value!r} as a scalar")


def format_scalar(value: Scalar) -> str:
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, float):
        if value.is_integer():
            return str(int(value))
        return repr(value)
    return str(value)


# ---------------------------------------------------------------------------
# occupancies and mixed states


def as_occupancy(value) -> Occupancy:
    """Normalize a flat single-node vector or a per-node nested sequence."""
    items = tuple(value)
    if items and all(isinstance(x, int) and not isinstance(x, bool) for x in items):
        items = (items,)
    occ = tuple(tuple(int(n) for n in node) for node in items)
    for node in occ:
        for n in node:
            if n < 0:
                raise ValueError(f"negative occupancy count in {occ}")
    return occ


def layout_of(occ: Occupancy) -> Layout:
    return tuple(len(node) for node in occ)


def occupancy_factorial(occ: Occupancy) -> int:
    """``prod_k n_k!`` over every node and bin."""
    out = 1
    for node in occ:
        for n in node:
            out *= math.factorial(n)
    return out


def check_site(layout: Layout, node: int, bin: int) -> None:
    if not 1 <= node <= len(layout):
        raise IndexError(f"node {node} out of range 1..{len(layout)}")
    if not 1 <= bin <= layout[node - 1]:
        raise IndexError(f"bin {bin} out of range 1..{layout[node - 1]} at node {node}")


class MixedState:
    """Finite weighted sum of occupancy basis states.

    The empty map is the annihilated result ``0``; it is distinct from the
    vacuum, which is the all-zero occupancy with weight one. Weights are never
    normalized implicitly. Zero-weight entries are dropped on construction.
    """

    __slots__ = ("layout", "_terms")

    def __init__(self, terms: Mapping | None = None, layout: Sequence[int] | None = None):
        clean: dict[Occupancy, Scalar] = {}
        lay = tuple(layout) if layout is not None else None
        for key, weight in (terms or {}).items():
            occ = as_occupancy(key)
            if lay is None:
                lay = layout_of(occ)
            elif layout_of(occ) != lay:
                raise ValueError(f"occupancy {occ} does not match layout {lay}")
            if weight != 0:
                clean[occ] = clean.get(occ, 0) + weight
                if clean[occ] == 0:
                    del clean[occ]
        self.layout: Layout | None = lay
        self._terms = clean

    @classmethod
    def _raw(cls, terms: dict, layout) -> "MixedState":
        obj = cls.__new__(cls)
        obj.layout = layout
        obj._terms = terms
        return obj

    @classmethod
    def vacuum(cls, layout: Sequence[int]) -> "MixedState":
        lay = tuple(layout)
        return cls._raw({tuple((0,) * m for m in lay): 1}, lay)

    @classmethod
    def zero(cls, layout: Sequence[int] | None = None) -> "MixedState":
        return cls._raw({}, tuple(layout) if layout is not None else None)

    @classmethod
    def pure(cls, occupancy, weight: Scalar = 1) -> "MixedState":
        occ = as_occupancy(occupancy)
        return cls({occ: weight}, layout_of(occ))

    def items(self):
        return self._terms.items()

    def occupancies(self):
        return self._terms.keys()

    def weight(self, occupancy) -> Scalar:
        return self._terms.get(as_occupancy(occupancy), 0)

    __getitem__ = weight

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self) -> Iterator[Occupancy]:
        return iter(self._terms)

    def __contains__(self, occupancy) -> bool:
        return as_occupancy(occupancy) in self._terms

    @property
    def is_zero(self) -> bool:
        return not self._terms

    def total(self) -> Scalar:
        return sum(self._terms.values(), 0)

    def scale(self, c: Scalar) -> "MixedState":
        if c == 0:
            return MixedState.zero(self.layout)
        return MixedState._raw({k: w * c for k, w in self._terms.items()}, self.layout)

    def __add__(self, other: "MixedState") -> "MixedState":
        if not isinstance(other, MixedState):
            return NotImplemented
        layout = self.layout or other.layout
        if self.layout and other.layout and self.layout != other.layout:
            raise ValueError("cannot add states with different layouts")
        acc = dict(self._terms)
        for k, w in other._terms.items():
            acc[k] = acc.get(k, 0) + w
        return MixedState._raw({k: w for k, w in acc.items() if w != 0}, layout)

    def __mul__(self, c):
        if isinstance(c, (int, float, Fraction)):
            return self.scale(c)
        return NotImplemented

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        if not isinstance(other, MixedState):
            return NotImplemented
        if self._terms != other._terms:
            return False
        # an empty state without a layout equals any empty state
        return not self._terms or self.layout == other.layout

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    def as_dict(self) -> dict[Occupancy, Scalar]:
        return dict(self._terms)

    def divided_weights(self) -> dict[Occupancy, Scalar]:
        """Weights with the ``prod n_k!`` permutation factor divided out."""
        return {k: _div(w, occupancy_factorial(k)) for k, w in self._terms.items()}

    def __repr__(self) -> str:
        if not self._terms:
            return "MixedState(0)"
        body = ", ".join(
            f"{_fmt_occ(k)}: {format_scalar(w)}" for k, w in sorted(self._terms.items(), reverse=True)
        )
        return "MixedState({" + body + "})"


def _div(w, d):
    return Fraction(w, d) if isinstance(w, int) else w / d


def _fmt_occ(occ: Occupancy) -> str:
    if len(occ) == 1:
        return str(occ[0])
    return str(occ)


def _bump(occ: Occupancy, node: int, bin: int, delta: int) -> Occupancy:
    row = list(occ[node - 1])
    row[bin - 1] += delta
    return occ[: node - 1] + (tuple(row),) + occ[node:]


def _apply_factor(terms: dict, factor: Factor) -> dict:
    node, bin, power = factor.node, factor.bin, factor.power
    out: dict = {}
    if factor.kind is Kind.CREATE:
        for occ, w in terms.items():
            key = _bump(occ, node, bin, power)
            out[key] = out.get(key, 0) + w
        return out
    for occ, w in terms.items():
        n = occ[node - 1][bin - 1]
        if n < power:
            continue
        mult = math.perm(n, power)
        key = _bump(occ, node, bin, -power)
        out[key] = out.get(key, 0) + w * mult
    return out


def apply_create(state: MixedState, site: Site | tuple[int, int]) -> MixedState:
    """Create one sample at ``site`` in every term; weights are unchanged."""
    node, bin = site
    if state.layout is not None:
        check_site(state.layout, node, bin)
    return MixedState._raw(_apply_factor(state._terms, Factor(Kind.CREATE, node, bin)), state.layout)


def apply_annihilate(state: MixedState, site: Site | tuple[int, int]) -> MixedState:
    """Annihilate one sample at ``site``; each term is weighted by its count there."""
    node, bin = site
    if state.layout is not None:
        check_site(state.layout, node, bin)
    terms = _apply_factor(state._terms, Factor(Kind.ANNIHILATE, node, bin))
    return MixedState._raw({k: w for k, w in terms.items() if w != 0}, state.layout)


def apply_expr(expr: "OperatorExpr", state: MixedState) -> MixedState:
    """Apply ``expr`` linearly; within each word the rightmost factor acts first."""
    layout = state.layout
    if layout is not None:
        for node, bin in expr.sites():
            check_site(layout, node, bin)
    acc: dict = defaultdict(int)
    for word, coeff in expr.terms.items():
        cur = state._terms
        for factor in reversed(word):
            if not cur:
                break
            cur = _apply_factor(cur, factor)
        for occ, w in cur.items():
            acc[occ] += coeff * w
    return MixedState._raw({k: w for k, w in acc.items() if w != 0}, layout)


# ---------------------------------------------------------------------------
# operator expressions


def _coerce_factor(f) -> Factor:
    if isinstance(f, Factor):
        out = f
    else:
        kind, node, bin, *rest = f
        out = Factor(Kind(kind), int(node), int(bin), int(rest[0]) if rest else 1)
    if out.power < 1:
        raise ValueError(f"factor power must be >= 1, got {out.power}")
    if out.node < 1 or out.bin < 1:
        raise IndexError(f"site indices are 1-based, got ({out.node}, {out.bin})")
    return out


def _simplify_word(word: Iterable) -> Word:
    """Sort and merge inside maximal same-kind runs; same-kind operators commute."""
    out: list[Factor] = []
    run: dict[tuple[int, int], int] = {}
    run_kind = None

    def flush():
        for (node, bin), p in sorted(run.items()):
            out.append(Factor(run_kind, node, bin, p))
        run.clear()

    for raw in word:
        f = _coerce_factor(raw)
        if f.kind is not run_kind:
            if run:
                flush()
            run_kind = f.kind
        run[(f.node, f.bin)] = run.get((f.node, f.bin), 0) + f.power
    if run:
        flush()
    return tuple(out)


class OperatorExpr:
    """Finite weighted sum of operator words (products of :class:`Factor`).

    Words are kept with same-kind runs sorted and merged, which is always an
    exact rewrite. Full canonical form requires :func:`normal_order`.
    """

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping | None = None):
        acc: dict[Word, Scalar] = {}
        for word, coeff in (terms or {}).items():
            w = _simplify_word(word)
            acc[w] = acc.get(w, 0) + coeff
        self._terms = {w: c for w, c in acc.items() if c != 0}

    @classmethod
    def _raw(cls, terms: dict) -> "OperatorExpr":
        obj = cls.__new__(cls)
        obj._terms = terms
        return obj

    @classmethod
    def identity(cls, coeff: Scalar = 1) -> "OperatorExpr":
        return cls._raw({(): coeff} if coeff != 0 else {})

    scalar = identity

    @classmethod
    def zero(cls) -> "OperatorExpr":
        return cls._raw({})

    @classmethod
    def create(cls, node: int, bin: int, power: int = 1) -> "OperatorExpr":
        return cls({(Factor(Kind.CREATE, node, bin, power),): 1})

    @classmethod
    def annihilate(cls, node: int, bin: int, power: int = 1) -> "OperatorExpr":
        return cls({(Factor(Kind.ANNIHILATE, node, bin, power),): 1})

    @property
    def terms(self) -> Mapping[Word, Scalar]:
        return self._terms

    def __len__(self) -> int:
        return len(self._terms)

    @property
    def is_zero(self) -> bool:
        return not self._terms

    @property
    def is_normal_ordered(self) -> bool:
        for word in self._terms:
            seen_ann = False
            for f in word:
                if f.kind is Kind.ANNIHILATE:
                    seen_ann = True
                elif seen_ann:
                    return False
        return True

    def sites(self) -> set[tuple[int, int]]:
        return {(f.node, f.bin) for word in self._terms for f in word}

    def nodes(self) -> set[int]:
        return {f.node for word in self._terms for f in word}

    def _combine(self, other: "OperatorExpr", sign) -> "OperatorExpr":
        acc = dict(self._terms)
        for w, c in other._terms.items():
            acc[w] = acc.get(w, 0) + sign * c
        return OperatorExpr._raw({w: c for w, c in acc.items() if c != 0})

    def __add__(self, other):
        if isinstance(other, (int, float, Fraction)):
            other = OperatorExpr.identity(other)
        if not isinstance(other, OperatorExpr):
            return NotImplemented
        return self._combine(other, 1)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, (int, float, Fraction)):
            other = OperatorExpr.identity(other)
        if not isinstance(other, OperatorExpr):
            return NotImplemented
        return self._combine(other, -1)

    def __neg__(self):
        return OperatorExpr._raw({w: -c for w, c in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, float, Fraction)):
            if other == 0:
                return OperatorExpr.zero()
            return OperatorExpr._raw({w: c * other for w, c in self._terms.items()})
        if not isinstance(other, OperatorExpr):
            return NotImplemented
        acc: dict[Word, Scalar] = {}
        for w1, c1 in self._terms.items():
            for w2, c2 in other._terms.items():
                w = _simplify_word(w1 + w2) if w1 and w2 else (w1 or w2)
                acc[w] = acc.get(w, 0) + c1 * c2
        return OperatorExpr._raw({w: c for w, c in acc.items() if c != 0})

    def __rmul__(self, other):
        if isinstance(other, (int, float, Fraction)):
            return self * other
        return NotImplemented

    def __pow__(self, k: int) -> "OperatorExpr":
        out = OperatorExpr.identity()
        for _ in range(k):
            out = out * self
        return out

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, float, Fraction)):
            other = OperatorExpr.identity(other)
        if not isinstance(other, OperatorExpr):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    def __str__(self) -> str:
        return render_expr(self)

    def __repr__(self) -> str:
        return f"OperatorExpr({render_expr(self)!r})"


# ---------------------------------------------------------------------------
# normal ordering


def _set_power(factors: tuple, site, power: int) -> tuple:
    d = dict(factors)
    if power:
        d[site] = power
    else:
        d.pop(site, None)
    return tuple(sorted(d.items()))


@lru_cache(maxsize=65536)
def _normal_order_word(word: Word) -> tuple:
    """Normal-ordered expansion of one word as ``((creations, annihilations), int)`` pairs.

    Words are multiplied in from the left. Pushing ``(a_j^dagger)^q`` left past
    ``a_j^p`` uses the closed form of repeated ``a a^dagger = a^dagger a + 1``:
    ``a^p (a^dagger)^q = sum_k C(p,k) C(q,k) k! (a^dagger)^(q-k) a^(p-k)``.
    """
    acc = {((), ()): 1}
    for f in word:
        site = (f.node, f.bin)
        new: dict = defaultdict(int)
        if f.kind is Kind.ANNIHILATE:
            for (cre, ann), c in acc.items():
                p = dict(ann).get(site, 0)
                new[(cre, _set_power(ann, site, p + f.power))] += c
        else:
            q = f.power
            for (cre, ann), c in acc.items():
                p = dict(ann).get(site, 0)
                have = dict(cre).get(site, 0)
                for k in range(min(p, q) + 1):
                    mult = math.comb(p, k) * math.comb(q, k) * math.factorial(k)
                    key = (_set_power(cre, site, have + q - k), _set_power(ann, site, p - k))
                    new[key] += c * mult
        acc = {k: v for k, v in new.items() if v}
    return tuple(acc.items())


def _key_to_word(cre, ann) -> Word:
    return tuple(Factor(Kind.CREATE, n, b, p) for (n, b), p in cre) + tuple(
        Factor(Kind.ANNIHILATE, n, b, p) for (n, b), p in ann
    )


def normal_order(expr: OperatorExpr) -> OperatorExpr:
    """Rewrite ``expr`` so every creation factor precedes every annihilation factor."""
    acc: dict[Word, Scalar] = defaultdict(int)
    for word, coeff in expr.terms.items():
        for (cre, ann), mult in _normal_order_word(word):
            acc[_key_to_word(cre, ann)] += coeff * mult
    return OperatorExpr._raw({w: c for w, c in acc.items() if c != 0})


def commutator(a: OperatorExpr, b: OperatorExpr) -> OperatorExpr:
    """``[a, b]`` in normal-ordered form; empty exactly when ``a`` and ``b`` commute."""
    return normal_order(a * b - b * a)


def number_operator(bins: Sequence[int], node: int | None = None, bin: int | None = None) -> OperatorExpr:
    """Number operator for one site, one node, or the whole network.

    ``bins`` is the per-node bin count layout.
    """
    layout = tuple(bins)
    if node is None:
        if bin is not None:
            raise ValueError("a bin index needs a node index")
        sites = [(s, i) for s, m in enumerate(layout, 1) for i in range(1, m + 1)]
    elif bin is None:
        if not 1 <= node <= len(layout):
            raise IndexError(f"node {node} out of range 1..{len(layout)}")
        sites = [(node, i) for i in range(1, layout[node - 1] + 1)]
    else:
        check_site(layout, node, bin)
        sites = [(node, bin)]
    return OperatorExpr._raw(
        {(Factor(Kind.CREATE, s, i), Factor(Kind.ANNIHILATE, s, i)): 1 for s, i in sites}
    )


def inner_product(bra, state: MixedState) -> Scalar:
    """Overlap of the adjoint basis state ``bra`` with ``state``.

    Computed by applying the bra's annihilation operators and reading off the
    vacuum coefficient, so it equals ``weight(bra) * prod n_k!``.
    """
    occ = as_occupancy(bra)
    if state.layout is not None and layout_of(occ) != state.layout:
        raise ValueError(f"bra layout {layout_of(occ)} does not match state layout {state.layout}")
    terms = state._terms
    for node, row in enumerate(occ, 1):
        for bin, n in enumerate(row, 1):
            if n:
                terms = _apply_factor(terms, Factor(Kind.ANNIHILATE, node, bin, n))
    vac = tuple((0,) * len(row) for row in occ)
    return terms.get(vac, 0)


# ---------------------------------------------------------------------------
# text grammar:  c * A'[s,i]^p A[s,j]^q + ...


_TOKEN = re.compile(
    r"""\s*(?:
        (?P<op>A'?)\[\s*(?P<node>\d+)\s*,\s*(?P<bin>\d+)\s*\](?:\^(?P<pow>\d+))?
      | (?P<num>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?(?:/\d+)?|\.\d+(?:[eE][-+]?\d+)?)
      | (?P<sym>[-+*])
    )""",
    re.VERBOSE,
)


def _tokens(text: str):
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ValueError(f"unexpected input at column {pos}: {text[pos:pos + 12]!r}")
        pos = m.end()
        if m.group("op"):
            kind = Kind.CREATE if m.group("op") == "A'" else Kind.ANNIHILATE
            yield "factor", Factor(kind, int(m.group("node")), int(m.group("bin")), int(m.group("pow") or 1))
        elif m.group("num"):
            yield "num", Fraction(m.group("num"))
        else:
            yield m.group("sym"), None


def parse_expr(text: str) -> OperatorExpr:
    """Parse ``c * A'[s,i]^p A[s,j]^q + ...``; ``A'`` creates and ``A`` annihilates."""
    toks = list(_tokens(text))
    if not toks:
        raise ValueError("empty expression")
    if len(toks) == 1 and toks[0] == ("num", 0):
        return OperatorExpr.zero()
    terms: dict[Word, Scalar] = defaultdict(int)
    i = 0
    sign = 1
    expecting_term = True
    while i < len(toks):
        kind, val = toks[i]
        if kind in "+-":
            if expecting_term and i != 0:
                raise ValueError("dangling operator in expression")
            sign = -1 if kind == "-" else 1
            expecting_term = True
            i += 1
            continue
        if not expecting_term:
            raise ValueError("missing '+' or '-' between terms")
        coeff: Scalar = 1
        if kind == "num":
            coeff = val
            i += 1
            if i < len(toks) and toks[i][0] == "*":
                i += 1
                if i >= len(toks) or toks[i][0] != "factor":
                    raise ValueError("expected an operator factor after '*'")
        word = []
        while i < len(toks) and toks[i][0] == "factor":
            word.append(toks[i][1])
            i += 1
        if kind != "num" and not word:
            raise ValueError(f"unexpected token {kind!r}")
        try:
            key = _simplify_word(word)
        except IndexError as exc:
            raise ValueError(str(exc)) from None
        terms[key] += sign * coeff
        sign = 1
        expecting_term = False
    if expecting_term:
        raise ValueError("expression ends with an operator")
    return OperatorExpr._raw({w: c for w, c in terms.items() if c != 0})


def _render_factor(f: Factor) -> str:
    head = "A'" if f.kind is Kind.CREATE else "A"
    tail = f"^{f.power}" if f.power != 1 else ""
    return f"{head}[{f.node},{f.bin}]{tail}"


def _word_sort_key(word: Word):
    return (sum(f.power for f in word), len(word), [(f.kind, f.node, f.bin, f.power) for f in word])


def render_expr(expr: OperatorExpr) -> str:
    """Deterministic text form, parseable by :func:`parse_expr`."""
    if expr.is_zero:
        return "0"
    parts = []
    for word in sorted(expr.terms, key=_word_sort_key):
        coeff = expr.terms[word]
        neg = coeff < 0
        mag = -coeff if neg else coeff
        body = " ".join(_render_factor(f) for f in word)
        if not word:
            text = format_scalar(mag)
        elif mag == 1:
            text = body
        else:
            text = f"{format_scalar(mag)} * {body}"
        if not parts:
            parts.append(("-" if neg else "") + text)
        else:
            parts.append(("- " if neg else "+ ") + text)
    return " ".join(parts)
