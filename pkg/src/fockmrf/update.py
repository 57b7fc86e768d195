"""The update operator ``H = sum_s H_s`` built from hopping operators and clique factors.

For an unclamped node ``s``::

    H_s = sum_i a_i^s+ (sum_j a_j^s) * src_i^s
              * prod_t (sum_k p[i][k] N_k^t)
              * prod_(t1<t2) (sum_k1,k2 p[i][k1][k2] N_k1^t1 N_k2^t2)

The number operators sit to the right of the hop, so they read the
occupancies of the state being updated. Neighborhoods never contain ``s``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, NamedTuple, Sequence

from .algebra import (
    MixedState,
    OperatorExpr,
    apply_expr,
    commutator,
    normal_order,
    number_operator,
    to_scalar,
)
from .errors import CapacityError, ModelError
from .model import MrfSpec, creation_weights

MAX_MONOMIALS = 10**6


@dataclass(frozen=True)
class UpdateOperator:
    """Normal-ordered ``expr`` plus its per-node decomposition.

    ``pieces[s]`` is the normal-ordered ``H_s``. ``factored[s]`` keeps, for each
    creation bin ``i``, the scalar source weight and the unexpanded neighbor
    factors; it is far smaller than the normal-ordered form and is what
    :meth:`apply_piece` uses.
    """

    expr: OperatorExpr
    spec: MrfSpec
    pieces: Mapping[int, OperatorExpr]
    factored: Mapping[int, tuple] = field(default_factory=dict, compare=False)

    @property
    def identity(self) -> OperatorExpr:
        return OperatorExpr.identity()

    @property
    def nodes(self) -> tuple:
        return tuple(sorted(self.pieces))

    @property
    def layout(self) -> tuple:
        return self.spec.bins

    def apply(self, state: MixedState) -> MixedState:
        out = MixedState.zero(self.spec.bins)
        for s in self.nodes:
            out = out + self.apply_piece(s, state)
        return out

    def apply_piece(self, s: int, state: MixedState) -> MixedState:
        """Apply ``H_s`` to ``state`` using the factored form when available."""
        if s not in self.factored:
            return apply_expr(self.pieces[s], state)
        hop_sum, per_bin = self.factored[s]
        annihilated = apply_expr(hop_sum, state)
        out = MixedState.zero(self.spec.bins)
        for create, weight, factors in per_bin:
            part = annihilated
            for f in reversed(factors):
                part = apply_expr(f, part)
            out = out + apply_expr(create, part).scale(weight)
        return out

    def with_extra(self, extra: OperatorExpr, node: int | None = None) -> "UpdateOperator":
        """Copy with ``extra`` added to the full expression (and to ``pieces[node]``).

        Intended for negative controls; the factored form is dropped.
        """
        pieces = dict(self.pieces)
        if node is not None:
            pieces[node] = normal_order(pieces.get(node, OperatorExpr.zero()) + extra)
        return replace(self, expr=normal_order(self.expr + extra), pieces=pieces, factored={})


def _pair_factor(t: int, row: Sequence, bins) -> OperatorExpr:
    out = OperatorExpr.zero()
    for k, w in enumerate(row, 1):
        if w:
            out = out + w * number_operator(bins, t, k)
    return out


def _triple_factor(t1: int, t2: int, plane: Sequence, bins) -> OperatorExpr:
    out = OperatorExpr.zero()
    for k1, row in enumerate(plane, 1):
        n1 = number_operator(bins, t1, k1)
        for k2, w in enumerate(row, 1):
            if w:
                out = out + w * (n1 * number_operator(bins, t2, k2))
    return out


def _estimate(spec: MrfSpec, s: int) -> int:
    m = spec.bins[s - 1]
    size = m * m
    for t, _ in spec.pair_factors(s):
        size *= spec.bins[t - 1]
    for t1, t2, _ in spec.triple_factors(s):
        size *= spec.bins[t1 - 1] * spec.bins[t2 - 1]
    return size


def _guard(expr: OperatorExpr, s: int):
    if len(expr) > MAX_MONOMIALS:
        raise CapacityError(f"H_{s} exceeds {MAX_MONOMIALS} monomials", len(expr))


def build_mrf_H(spec: MrfSpec) -> UpdateOperator:
    """Normal-ordered update operator of ``spec``; clamped nodes get no piece."""
    bins = spec.bins
    pieces = {}
    factored = {}
    for s in spec.unclamped_nodes:
        est = _estimate(spec, s)
        if est > MAX_MONOMIALS:
            raise CapacityError(f"H_{s} would have up to {est} monomials (limit {MAX_MONOMIALS})", est)
        m = bins[s - 1]
        hop_sum = OperatorExpr.zero()
        for j in range(1, m + 1):
            hop_sum = hop_sum + OperatorExpr.annihilate(s, j)
        src = spec.source_weights(s)
        piece = OperatorExpr.zero()
        per_bin = []
        for i in range(1, m + 1):
            w = src[i - 1]
            if not w:
                continue
            factors = [_pair_factor(t, table[i - 1], bins) for t, table in spec.pair_factors(s)]
            factors += [_triple_factor(t1, t2, table[i - 1], bins) for t1, t2, table in spec.triple_factors(s)]
            create = OperatorExpr.create(s, i)
            per_bin.append((create, w, tuple(factors)))
            term = normal_order(w * (create * hop_sum))
            for f in factors:
                term = normal_order(term * f)
                _guard(term, s)
            piece = piece + term
            _guard(piece, s)
        pieces[s] = piece
        factored[s] = (hop_sum, tuple(per_bin))
    expr = OperatorExpr.zero()
    for s in sorted(pieces):
        expr = expr + pieces[s]
    return UpdateOperator(expr, spec, pieces, factored)


def build_single_node_H(p: Sequence, m: int | None = None) -> UpdateOperator:
    """``H = sum_i p_i a_i+ sum_j a_j`` on one node with ``m`` bins."""
    weights = tuple(to_scalar(w) for w in p)
    if m is None:
        m = len(weights)
    if len(weights) != m:
        raise ValueError(f"{len(weights)} weights given for {m} bins")
    if any(w < 0 for w in weights):
        raise ValueError("weights must be nonnegative")
    if not any(weights):
        raise ModelError("all creation weights are zero")
    spec = MrfSpec(1, (m,), {1: weights})
    return build_mrf_H(spec)


class ConservationReport(NamedTuple):
    ok: bool
    witness: OperatorExpr


def verify_number_conservation(H, u: int, bins: Sequence[int] | None = None) -> ConservationReport:
    """Check ``[H, N^u] = 0``; the witness is the normal-ordered commutator."""
    if isinstance(H, UpdateOperator):
        expr, bins = H.expr, H.spec.bins
    else:
        expr = H
        if bins is None:
            raise ValueError("bins are required for a bare expression")
    c = commutator(expr, number_operator(bins, u))
    if len(c) > MAX_MONOMIALS:
        raise CapacityError(f"commutator exceeds {MAX_MONOMIALS} monomials", len(c))
    return ConservationReport(c.is_zero, c)


def per_node_balance(expr: OperatorExpr) -> bool:
    """True if every monomial has as many creations as annihilations at each node."""
    for word in expr.terms:
        counts: dict = {}
        for f in word:
            counts[f.node] = counts.get(f.node, 0) + (f.power if f.kind == 0 else -f.power)
        if any(counts.values()):
            return False
    return True


def single_sample_ensemble(spec: MrfSpec, bins_per_node: Sequence[int]) -> MixedState:
    """Direct classical ensemble ``sum_s sum_i w_i(s) * state(i at s)`` for a one-sample-per-node state.

    ``bins_per_node`` is 1-based. Used as an oracle for ``H`` applied to pure states.
    """
    occ = tuple(tuple(int(k == b) for k in range(1, m + 1)) for b, m in zip(bins_per_node, spec.bins))
    terms: dict = {}
    for s in spec.unclamped_nodes:
        w = creation_weights(spec, s, occ)
        for i, wi in enumerate(w, 1):
            if not wi:
                continue
            new = list(occ)
            new[s - 1] = tuple(int(k == i) for k in range(1, spec.bins[s - 1] + 1))
            key = tuple(new)
            terms[key] = terms.get(key, 0) + wi
    return MixedState(terms, spec.bins)


__all__ = [
    "MAX_MONOMIALS",
    "UpdateOperator",
    "ConservationReport",
    "build_mrf_H",
    "build_single_node_H",
    "verify_number_conservation",
    "per_node_balance",
    "single_sample_ensemble",
]
