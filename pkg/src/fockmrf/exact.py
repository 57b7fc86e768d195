"""Brute-force exact machinery on small canonical occupancy spaces.

Kernels are built by applying each piece ``H_s`` to every basis state and
normalizing the resulting weights per source state. The weights are taken as
they come out of the operator algebra, i.e. as coefficients of the
unnormalized basis states. For a single node that already gives the
"annihilate a uniformly chosen sample, recreate it with probability p_i" move.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

from .algebra import MixedState, Occupancy, Scalar, apply_expr, as_occupancy, format_scalar, to_scalar
from .errors import CapacityError, ConvergenceError, ModelError, ReducibilityError
from .model import MrfSpec, hce_joint_weight
from .update import UpdateOperator, build_single_node_H

DEFAULT_MAX_STATES = 10**6
STATIONARY_TOL = 1e-12
MAX_ITERATIONS = 10**6

SCHEMES = ("random-scan", "sequential-scan")


def max_states() -> int:
    raw = os.environ.get("FOCKMRF_MAX_STATES")
    return int(raw) if raw else DEFAULT_MAX_STATES


def compositions(n: int, m: int) -> Iterator[tuple]:
    """All length-``m`` nonnegative vectors summing to ``n``, descending lexicographic."""
    if m == 1:
        yield (n,)
        return
    for first in range(n, -1, -1):
        for rest in compositions(n - first, m - 1):
            yield (first,) + rest


class StateSpace:
    """Fixed-total occupancy states of every node, in descending lexicographic order."""

    def __init__(self, bins: Sequence[int], totals: Sequence[int], clamped: dict | None = None, spec=None):
        self.bins = tuple(bins)
        self.totals = tuple(int(n) for n in totals)
        self.spec = spec
        clamped = dict(clamped or {})
        if len(self.totals) != len(self.bins):
            raise ValueError(f"{len(self.totals)} totals given for {len(self.bins)} nodes")
        if any(n < 0 for n in self.totals):
            raise ValueError("totals must be nonnegative")
        for node, occ in clamped.items():
            if sum(occ) != self.totals[node - 1]:
                raise ValueError(f"total {self.totals[node - 1]} at node {node} disagrees with clamped occupancy {list(occ)}")
        size = 1
        for s, (m, n) in enumerate(zip(self.bins, self.totals), 1):
            size *= 1 if s in clamped else math.comb(n + m - 1, m - 1)
        limit = max_states()
        if size > limit:
            raise CapacityError(f"state space has {size} states (limit {limit})", size)
        per_node = [
            [tuple(clamped[s])] if s in clamped else list(compositions(n, m))
            for s, (m, n) in enumerate(zip(self.bins, self.totals), 1)
        ]
        self.states: list[Occupancy] = [()]
        for options in per_node:
            self.states = [prefix + (o,) for prefix in self.states for o in options]
        self._index = {occ: i for i, occ in enumerate(self.states)}

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self):
        return iter(self.states)

    def __getitem__(self, i: int) -> Occupancy:
        return self.states[i]

    def __contains__(self, occ) -> bool:
        return as_occupancy(occ) in self._index

    def index(self, occ) -> int:
        return self._index[as_occupancy(occ)]


def enumerate_states(spec: MrfSpec | Sequence[int], totals: Sequence[int] | int) -> StateSpace:
    """State space of ``spec`` (or of a bare bin layout) with fixed per-node totals."""
    if isinstance(spec, MrfSpec):
        bins, clamped = spec.bins, spec.clamped
    else:
        bins, clamped, spec = tuple(spec), {}, None
    if isinstance(totals, int):
        totals = [totals] * len(bins)
    return StateSpace(bins, totals, clamped, spec)


def _exact(x):
    return x if isinstance(x, float) else Fraction(x)


def _normalize(weights: dict) -> dict:
    total = _exact(sum(weights.values()))
    return {k: v / total for k, v in weights.items()}


def _sparse_product(a: list, b: list) -> list:
    out = []
    for row in a:
        acc: dict = {}
        for k, x in row.items():
            for j, y in b[k].items():
                acc[j] = acc.get(j, 0) + x * y
        out.append({j: v for j, v in acc.items() if v})
    return out


@dataclass(frozen=True)
class TransitionKernel:
    """Row-stochastic kernel over ``space``; rows are sparse ``{target index: prob}`` maps.

    Probabilities are exact fractions when all model weights are exact.
    ``site_rows[s]`` holds the kernel that updates node ``s`` only.
    """

    space: StateSpace
    scheme: str
    rows: tuple
    site_rows: dict

    def __len__(self) -> int:
        return len(self.rows)

    def row(self, i: int) -> dict:
        return self.rows[i]

    def site_kernel(self, s: int) -> "TransitionKernel":
        return TransitionKernel(self.space, f"site-{s}", self.site_rows[s], {s: self.site_rows[s]})

    def to_dense(self) -> np.ndarray:
        k = np.zeros((len(self.rows), len(self.rows)))
        for i, row in enumerate(self.rows):
            for j, v in row.items():
                k[i, j] = float(v)
        return k

    def coo(self):
        rows, cols, vals = [], [], []
        for i, row in enumerate(self.rows):
            for j, v in row.items():
                rows.append(i)
                cols.append(j)
                vals.append(float(v))
        return np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64), np.array(vals)

    def left_apply(self, pi: Sequence) -> list:
        """Exact ``pi K`` for a sequence of scalars."""
        out = [0] * len(self.rows)
        for i, row in enumerate(self.rows):
            if pi[i]:
                for j, v in row.items():
                    out[j] += pi[i] * v
        return out


def build_kernel(H: UpdateOperator, space: StateSpace, scheme: str = "random-scan") -> TransitionKernel:
    """Kernel induced by ``H``: per-site rows from ``H_s`` applied to each basis state, normalized."""
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")
    if tuple(H.spec.bins) != space.bins:
        raise ValueError(f"operator layout {H.spec.bins} does not match state space {space.bins}")
    site_rows = {}
    for s in H.nodes:
        rows = []
        for i, occ in enumerate(space.states):
            if not sum(occ[s - 1]):
                # nothing to annihilate: the update leaves the state alone
                rows.append({i: Fraction(1)})
                continue
            out = H.apply_piece(s, MixedState.pure(occ))
            weights = {}
            for target, w in out.items():
                if target not in space._index:
                    raise ModelError(f"H_{s} maps {occ} outside the state space (to {target})")
                if w < 0:
                    raise ModelError(f"H_{s} produced negative weight {format_scalar(w)} from {occ}")
                weights[space._index[target]] = w
            if not weights or not sum(weights.values()) > 0:
                raise ModelError(f"no admissible creation bin at node {s} in state {occ}")
            rows.append(_normalize(weights))
        site_rows[s] = tuple(rows)
    nodes = sorted(site_rows)
    if scheme == "random-scan":
        share = Fraction(1, len(nodes))
        rows = []
        for i in range(len(space)):
            acc: dict = {}
            for s in nodes:
                for j, v in site_rows[s][i].items():
                    acc[j] = acc.get(j, 0) + v * share
            rows.append(acc)
    else:
        rows = list(site_rows[nodes[0]])
        for s in nodes[1:]:
            rows = _sparse_product(rows, list(site_rows[s]))
    return TransitionKernel(space, scheme, tuple(rows), site_rows)


# ---------------------------------------------------------------------------
# distributions


@dataclass(frozen=True)
class Distribution:
    """Probabilities over the states of ``space`` (exact or float)."""

    space: StateSpace
    probs: tuple

    def __post_init__(self):
        if len(self.probs) != len(self.space):
            raise ValueError("distribution length does not match the state space")

    @property
    def array(self) -> np.ndarray:
        return np.array([float(p) for p in self.probs])

    def prob(self, occ) -> Scalar:
        return self.probs[self.space.index(occ)]

    def items(self):
        return zip(self.space.states, self.probs)

    def records(self) -> list:
        return [{"occupancy": [list(r) for r in occ], "prob": float(p)} for occ, p in self.items()]


def total_variation(a, b) -> float:
    x = a.array if isinstance(a, Distribution) else np.asarray(a, dtype=float)
    y = b.array if isinstance(b, Distribution) else np.asarray(b, dtype=float)
    return 0.5 * float(np.abs(x - y).sum())


def multinomial_distribution(space: StateSpace, p: Sequence) -> Distribution:
    """Multinomial law of a single-node space; exact when ``p`` is exact."""
    if len(space.bins) != 1:
        raise ValueError("multinomial law is defined for a single node")
    weights = [to_scalar(w) for w in p]
    total = _exact(sum(weights))
    weights = [w / total for w in weights]
    n = space.totals[0]
    probs = []
    for (occ,) in space.states:
        coeff = math.factorial(n)
        for k in occ:
            coeff //= math.factorial(k)
        pr: Scalar = coeff
        for w, k in zip(weights, occ):
            pr = pr * w**k
        probs.append(pr)
    return Distribution(space, tuple(probs))


def hce_distribution(spec: MrfSpec) -> Distribution:
    """Normalized product-form weights over the one-sample-per-node space."""
    space = enumerate_states(spec, [sum(spec.clamped.get(s, (1,))) for s in range(1, spec.num_nodes + 1)])
    weights = [hce_joint_weight(spec, occ) for occ in space.states]
    z = _exact(sum(weights))
    return Distribution(space, tuple(w / z for w in weights))


def expected_statistic(dist: Distribution, statistic: Callable[[Occupancy], object]):
    """``sum_x P(x) S(x)``; ``S`` may return a scalar or a sequence of scalars."""
    acc = None
    for occ, p in dist.items():
        if not p:
            continue
        v = statistic(occ)
        if isinstance(v, (list, tuple, np.ndarray)):
            term = [p * x for x in v]
            acc = term if acc is None else [a + t for a, t in zip(acc, term)]
        else:
            acc = p * v if acc is None else acc + p * v
    if acc is None:
        return 0
    return tuple(acc) if isinstance(acc, list) else acc


# ---------------------------------------------------------------------------
# stationary distribution


def _strongly_connected(n: int, succ: list) -> list:
    """Tarjan's algorithm, iterative; components in reverse topological order."""
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    stack: list = []
    comps: list = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pos = work.pop()
            if pos == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            nbrs = succ[v]
            if pos < len(nbrs):
                work.append((v, pos + 1))
                w = nbrs[pos]
                if index[w] == -1:
                    work.append((w, 0))
                elif on_stack[w]:
                    low[v] = min(low[v], index[w])
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                comps.append(sorted(comp))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    return comps


def _period(members: list, succ: list) -> int:
    inside = set(members)
    depth = {members[0]: 0}
    frontier = [members[0]]
    g = 0
    while frontier:
        nxt = []
        for v in frontier:
            for w in succ[v]:
                if w not in inside:
                    continue
                if w in depth:
                    g = math.gcd(g, depth[v] + 1 - depth[w])
                else:
                    depth[w] = depth[v] + 1
                    nxt.append(w)
        frontier = nxt
    return g or 1


class Communication(NamedTuple):
    closed: list
    transient: list
    period: int


def communication_classes(kernel: TransitionKernel) -> Communication:
    """Closed classes, transient states, and the period of the first closed class."""
    n = len(kernel)
    succ = [sorted(j for j, v in row.items() if v) for row in kernel.rows]
    comps = _strongly_connected(n, succ)
    comp_of = {}
    for c, members in enumerate(comps):
        for v in members:
            comp_of[v] = c
    closed, transient = [], []
    for c, members in enumerate(comps):
        if all(comp_of[w] == c for v in members for w in succ[v]):
            closed.append(members)
        else:
            transient.extend(members)
    closed.sort()
    return Communication(closed, sorted(transient), _period(closed[0], succ))


def stationary_distribution(
    kernel: TransitionKernel, tol: float = STATIONARY_TOL, max_iter: int = MAX_ITERATIONS
) -> Distribution:
    """Unique stationary law of ``kernel`` by power iteration on ``(I + K) / 2``.

    The lazy kernel has the same stationary vector and is aperiodic, so
    periodic chains converge too. Raises :class:`ReducibilityError` when more
    than one closed class exists.
    """
    comm = communication_classes(kernel)
    space = kernel.space
    if len(comm.closed) > 1:
        shown = [[space.states[i] for i in c[:3]] for c in comm.closed[:5]]
        raise ReducibilityError(
            f"kernel is reducible: {len(comm.closed)} closed classes, e.g. {shown}",
            [[space.states[i] for i in c] for c in comm.closed],
        )
    rows, cols, vals = kernel.coo()
    n = len(kernel)
    pi = np.zeros(n)
    members = comm.closed[0]
    pi[members] = 1.0 / len(members)

    def step(x):
        return np.bincount(cols, weights=x[rows] * vals, minlength=n)

    for _ in range(max_iter):
        moved = step(pi)
        if np.abs(moved - pi).sum() < tol:
            return Distribution(space, tuple((moved / moved.sum()).tolist()))
        pi = 0.5 * (pi + moved)
        pi /= pi.sum()
    raise ConvergenceError(f"power iteration did not reach {tol} within {max_iter} iterations")


# ---------------------------------------------------------------------------
# equilibrium law


class EquilibriumReport(NamedTuple):
    eigenvalue: Scalar
    residual: Scalar
    offending: Occupancy | None
    ok: bool


def multinomial_state(p: Sequence, n: int) -> MixedState:
    """``sum n!/prod n_k! prod p_k^n_k`` over basis states with total ``n``."""
    weights = [to_scalar(w) for w in p]
    space = enumerate_states([len(weights)], [n])
    dist = multinomial_distribution(space, weights)
    return MixedState(dict(dist.items()), space.bins)


def check_equilibrium_multinomial(p: Sequence, m: int, n: int, psi: MixedState | None = None) -> EquilibriumReport:
    """Apply the single-node ``H`` to the multinomial state and read off ``H psi = lambda psi``.

    ``p`` is normalized on entry. The residual is the largest absolute
    coefficient of ``H psi - lambda psi``; ``ok`` requires it to be zero and
    ``lambda == n``.
    """
    weights = [to_scalar(w) for w in p]
    if len(weights) != m:
        raise ValueError(f"{len(weights)} weights given for {m} bins")
    if n < 1:
        raise ValueError("n must be at least 1")
    total = _exact(sum(weights))
    weights = [w / total for w in weights]
    if psi is None:
        psi = multinomial_state(weights, n)
    H = build_single_node_H(weights, m)
    image = apply_expr(H.expr, psi)
    ref = max(psi.items(), key=lambda kv: (abs(kv[1]), kv[0]))[0]
    lam = image.weight(ref) / psi.weight(ref)
    residual_state = image + psi.scale(-lam)
    if residual_state.is_zero:
        return EquilibriumReport(lam, 0, None, lam == n)
    worst, val = max(residual_state.items(), key=lambda kv: abs(kv[1]))
    return EquilibriumReport(lam, abs(val), worst, False)


__all__ = [
    "SCHEMES",
    "StateSpace",
    "TransitionKernel",
    "Distribution",
    "EquilibriumReport",
    "Communication",
    "compositions",
    "enumerate_states",
    "build_kernel",
    "stationary_distribution",
    "communication_classes",
    "check_equilibrium_multinomial",
    "multinomial_state",
    "multinomial_distribution",
    "hce_distribution",
    "expected_statistic",
    "total_variation",
    "max_states",
]
