"""Network description: nodes, bins, clique tables, sources and clamped evidence.

JSON document layout (indices are 1-based)::

    {
      "nodes": 3,
      "bins": [2, 2, 2],
      "source": {"1": [0.4, 0.6]},
      "two_cliques": [{"s": 1, "t": 2, "p": [[1, 2], [3, 4]]}],
      "three_cliques": [{"s": 1, "t1": 2, "t2": 3, "p": [[[...]]]}],
      "clamped": {"3": [0, 1]}
    }

A clique entry is an undirected factor table indexed ``p[x_s][x_t]`` (or
``p[x_s][x_t1][x_t2]``) shared by every member node. Adding
``"directed": true`` makes it a one-way influence of the other members on
``s`` only; such models have no product-form joint weight.

Weights may be JSON numbers or ``"a/b"`` strings. Integers and strings stay
exact; JSON floats stay floats.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping

import numpy as np

from .algebra import Occupancy, Scalar, as_occupancy, format_scalar, to_scalar
from .errors import ModeError, ModelError, ValidationError

# Above this many neighbor configurations the admissibility check samples.
_EXHAUSTIVE_LIMIT = 20000
_SAMPLED_CONFIGS = 2000


@dataclass(frozen=True)
class TwoClique:
    s: int
    t: int
    p: tuple
    directed: bool = False


@dataclass(frozen=True)
class ThreeClique:
    s: int
    t1: int
    t2: int
    p: tuple
    directed: bool = False


def _nested(arr: np.ndarray) -> tuple:
    if arr.ndim == 1:
        return tuple(arr.tolist())
    return tuple(_nested(a) for a in arr)


@dataclass(frozen=True)
class MrfSpec:
    """Validated, immutable network description.

    Construction validates every invariant; an instance that exists is valid.
    """

    num_nodes: int
    bins: tuple
    source: Mapping[int, tuple] = field(default_factory=dict)
    two_cliques: tuple = ()
    three_cliques: tuple = ()
    clamped: Mapping[int, tuple] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "bins", tuple(int(m) for m in self.bins))
        object.__setattr__(self, "source", {int(k): tuple(v) for k, v in dict(self.source).items()})
        object.__setattr__(self, "clamped", {int(k): tuple(int(n) for n in v) for k, v in dict(self.clamped).items()})
        object.__setattr__(self, "two_cliques", tuple(self.two_cliques))
        object.__setattr__(self, "three_cliques", tuple(self.three_cliques))
        self._validate_shape()
        pairs, triples = self._derive_views()
        object.__setattr__(self, "_pairs", pairs)
        object.__setattr__(self, "_triples", triples)
        self._validate_admissible()

    # -- validation -------------------------------------------------------

    def _check_node(self, node, path):
        if not isinstance(node, int) or isinstance(node, bool) or not 1 <= node <= self.num_nodes:
            raise ValidationError(f"node index {node!r} out of range 1..{self.num_nodes}", path)

    def _check_table(self, table, shape, path):
        arr = np.array(table, dtype=object)
        if arr.shape != shape:
            raise ValidationError(f"bin mismatch: table shape {arr.shape}, expected {shape}", path)
        for idx in itertools.product(*(range(n) for n in shape)):
            w = arr[idx]
            where = path + "".join(f"[{i}]" for i in idx)
            _check_weight(w, where)

    def _validate_shape(self):
        if not isinstance(self.num_nodes, int) or self.num_nodes < 1:
            raise ValidationError("must be a positive integer", "nodes")
        if len(self.bins) != self.num_nodes:
            raise ValidationError(f"bin mismatch: {len(self.bins)} entries for {self.num_nodes} nodes", "bins")
        for i, m in enumerate(self.bins):
            if m < 1:
                raise ValidationError("bin counts must be positive", f"bins[{i}]")
        for node, weights in self.source.items():
            self._check_node(node, f"source.{node}")
            if len(weights) != self.bins[node - 1]:
                raise ValidationError(
                    f"bin mismatch: {len(weights)} weights for {self.bins[node - 1]} bins", f"source.{node}"
                )
            for i, w in enumerate(weights):
                _check_weight(w, f"source.{node}[{i}]")
        seen = set()
        for idx, c in enumerate(self.two_cliques):
            path = f"two_cliques[{idx}]"
            self._check_node(c.s, path + ".s")
            self._check_node(c.t, path + ".t")
            if c.s == c.t:
                raise ValidationError("self-neighborhood: s and t must differ", path)
            self._check_table(c.p, (self.bins[c.s - 1], self.bins[c.t - 1]), path + ".p")
            directions = [(c.s, c.t)] if c.directed else [(c.s, c.t), (c.t, c.s)]
            for d in directions:
                if d in seen:
                    raise ValidationError(f"duplicate clique between nodes {d[0]} and {d[1]}", path)
                seen.add(d)
        seen3 = set()
        for idx, c in enumerate(self.three_cliques):
            path = f"three_cliques[{idx}]"
            self._check_node(c.s, path + ".s")
            self._check_node(c.t1, path + ".t1")
            self._check_node(c.t2, path + ".t2")
            if len({c.s, c.t1, c.t2}) != 3:
                raise ValidationError("self-neighborhood: s, t1, t2 must be distinct", path)
            shape = (self.bins[c.s - 1], self.bins[c.t1 - 1], self.bins[c.t2 - 1])
            self._check_table(c.p, shape, path + ".p")
            owners = [c.s] if c.directed else [c.s, c.t1, c.t2]
            members = frozenset((c.s, c.t1, c.t2))
            for owner in owners:
                if (owner, members) in seen3:
                    raise ValidationError(f"duplicate 3-clique on nodes {sorted(members)}", path)
                seen3.add((owner, members))
        for node, occ in self.clamped.items():
            self._check_node(node, f"clamped.{node}")
            if len(occ) != self.bins[node - 1]:
                raise ValidationError(
                    f"bin mismatch: {len(occ)} counts for {self.bins[node - 1]} bins", f"clamped.{node}"
                )
            if any(n < 0 for n in occ):
                raise ValidationError("occupancy counts must be nonnegative", f"clamped.{node}")
        if not self.unclamped_nodes:
            raise ValidationError("every node is clamped; nothing to update", "clamped")

    def _derive_views(self):
        pairs = {s: [] for s in range(1, self.num_nodes + 1)}
        triples = {s: [] for s in range(1, self.num_nodes + 1)}
        for c in self.two_cliques:
            arr = np.array(c.p, dtype=object)
            pairs[c.s].append((c.t, _nested(arr)))
            if not c.directed:
                pairs[c.t].append((c.s, _nested(arr.T)))
        for c in self.three_cliques:
            arr = np.array(c.p, dtype=object)
            # axes of arr are (s, t1, t2); re-index so the owner comes first
            views = [(c.s, (c.t1, c.t2), arr)]
            if not c.directed:
                views.append((c.t1, (c.s, c.t2), arr.transpose(1, 0, 2)))
                views.append((c.t2, (c.s, c.t1), arr.transpose(2, 0, 1)))
            for owner, (u, v), view in views:
                if u > v:
                    u, v, view = v, u, view.transpose(0, 2, 1)
                triples[owner].append((u, v, _nested(view)))
        pairs = {s: tuple(sorted(v, key=lambda x: x[0])) for s, v in pairs.items()}
        triples = {s: tuple(sorted(v, key=lambda x: x[:2])) for s, v in triples.items()}
        return pairs, triples

    def _validate_admissible(self):
        """Every unclamped node must have a positive creation bin for every neighbor state.

        Creation weights are products of sums over occupied neighbor bins, so a
        multiply occupied neighborhood admits a bin whenever any single-sample
        selection from its occupied bins does. Checking single-sample
        configurations is therefore sufficient.
        """
        rng = np.random.default_rng(0)
        for s in self.unclamped_nodes:
            nbrs = self.neighborhood(s)
            choices = []
            for t in nbrs:
                if t in self.clamped:
                    support = tuple(k for k, n in enumerate(self.clamped[t]) if n > 0)
                    if not support:
                        raise ValidationError(f"clamped neighbor {t} of node {s} is empty", f"clamped.{t}")
                    choices.append(support)
                else:
                    choices.append(tuple(range(self.bins[t - 1])))
            size = math.prod(len(c) for c in choices)
            if size <= _EXHAUSTIVE_LIMIT:
                configs = itertools.product(*choices)
            else:
                configs = (tuple(c[rng.integers(len(c))] for c in choices) for _ in range(_SAMPLED_CONFIGS))
            for config in configs:
                bins = dict(zip(nbrs, config))
                if not any(w > 0 for w in self._single_sample_weights(s, bins)):
                    shown = {t: k + 1 for t, k in bins.items()}
                    raise ValidationError(
                        f"no admissible creation bin at node {s} when neighbors occupy bins {shown}",
                        f"node {s}",
                    )

    def _single_sample_weights(self, s, bins):
        out = []
        for i in range(self.bins[s - 1]):
            w = self.source_weights(s)[i]
            for t, table in self._pairs[s]:
                w = w * table[i][bins[t]]
            for t1, t2, table in self._triples[s]:
                w = w * table[i][bins[t1]][bins[t2]]
            out.append(w)
        return out

    # -- accessors ----------------------------------------------------------

    @property
    def layout(self) -> tuple:
        return self.bins

    @property
    def unclamped_nodes(self) -> tuple:
        return tuple(s for s in range(1, self.num_nodes + 1) if s not in self.clamped)

    @property
    def has_product_form(self) -> bool:
        """True when every clique is undirected, so a joint weight exists."""
        return not any(c.directed for c in self.two_cliques + self.three_cliques)

    def source_weights(self, s: int) -> tuple:
        return self.source.get(s, (1,) * self.bins[s - 1])

    def pair_factors(self, s: int) -> tuple:
        """``((t, table), ...)`` with ``table[i][k]`` the weight for bin i at s, bin k at t."""
        return self._pairs[s]

    def triple_factors(self, s: int) -> tuple:
        """``((t1, t2, table), ...)`` with ``t1 < t2`` and ``table[i][k1][k2]``."""
        return self._triples[s]

    def neighborhood(self, s: int) -> tuple:
        nbrs = {t for t, _ in self._pairs[s]}
        for t1, t2, _ in self._triples[s]:
            nbrs.update((t1, t2))
        return tuple(sorted(nbrs))

    def to_document(self) -> dict:
        def enc(x):
            if isinstance(x, (tuple, list)):
                return [enc(v) for v in x]
            if isinstance(x, Fraction):
                return x.numerator if x.denominator == 1 else format_scalar(x)
            return x

        doc = {"nodes": self.num_nodes, "bins": list(self.bins)}
        if self.source:
            doc["source"] = {str(k): enc(v) for k, v in sorted(self.source.items())}
        if self.two_cliques:
            doc["two_cliques"] = [
                {"s": c.s, "t": c.t, "p": enc(c.p), **({"directed": True} if c.directed else {})}
                for c in self.two_cliques
            ]
        if self.three_cliques:
            doc["three_cliques"] = [
                {"s": c.s, "t1": c.t1, "t2": c.t2, "p": enc(c.p), **({"directed": True} if c.directed else {})}
                for c in self.three_cliques
            ]
        if self.clamped:
            doc["clamped"] = {str(k): list(v) for k, v in sorted(self.clamped.items())}
        return doc


def _check_weight(w, path):
    if isinstance(w, bool) or not isinstance(w, (int, float, Fraction)):
        raise ValidationError(f"weight {w!r} is not a number", path)
    if isinstance(w, float) and not math.isfinite(w):
        raise ValidationError(f"weight {w!r} is not finite", path)
    if w < 0:
        raise ValidationError(f"negative weight {format_scalar(w)}", path)


# ---------------------------------------------------------------------------
# loading


def _weight_tree(value, path):
    if isinstance(value, list):
        return tuple(_weight_tree(v, f"{path}[{i}]") for i, v in enumerate(value))
    try:
        return to_scalar(value)
    except (TypeError, ValueError, ZeroDivisionError):
        raise ValidationError(f"weight {value!r} is not a number", path) from None


def _int_field(entry, key, path):
    if key not in entry:
        raise ValidationError("missing field", f"{path}.{key}")
    v = entry[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ValidationError(f"expected an integer, got {v!r}", f"{path}.{key}")
    return v


def _node_key(key, path):
    try:
        return int(key)
    except (TypeError, ValueError):
        raise ValidationError(f"node key {key!r} is not an integer", path) from None


def load_spec(document) -> MrfSpec:
    """Build a validated :class:`MrfSpec` from JSON text or an already parsed mapping."""
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"parse error: {exc}") from exc
    if not isinstance(document, Mapping):
        raise ValidationError("top level must be an object")
    known = {"nodes", "bins", "source", "two_cliques", "three_cliques", "clamped"}
    extra = set(document) - known
    if extra:
        raise ValidationError(f"unknown field(s) {sorted(extra)}")
    if "nodes" not in document:
        raise ValidationError("missing field", "nodes")
    n = document["nodes"]
    if isinstance(n, bool) or not isinstance(n, int) or n < 1:
        raise ValidationError(f"expected a positive integer, got {n!r}", "nodes")
    bins = document.get("bins")
    if isinstance(bins, int) and not isinstance(bins, bool):
        bins = [bins] * n
    if not isinstance(bins, list) or not all(isinstance(m, int) and not isinstance(m, bool) for m in bins):
        raise ValidationError("expected a list of integers", "bins")

    source = {}
    for key, vec in (document.get("source") or {}).items():
        node = _node_key(key, f"source.{key}")
        if not isinstance(vec, list):
            raise ValidationError("expected a list of weights", f"source.{key}")
        source[node] = _weight_tree(vec, f"source.{key}")

    two = []
    for idx, entry in enumerate(document.get("two_cliques") or []):
        path = f"two_cliques[{idx}]"
        if not isinstance(entry, Mapping):
            raise ValidationError("expected an object", path)
        two.append(
            TwoClique(
                _int_field(entry, "s", path),
                _int_field(entry, "t", path),
                _weight_tree(entry.get("p"), path + ".p") if "p" in entry else _missing(path + ".p"),
                bool(entry.get("directed", False)),
            )
        )
    three = []
    for idx, entry in enumerate(document.get("three_cliques") or []):
        path = f"three_cliques[{idx}]"
        if not isinstance(entry, Mapping):
            raise ValidationError("expected an object", path)
        three.append(
            ThreeClique(
                _int_field(entry, "s", path),
                _int_field(entry, "t1", path),
                _int_field(entry, "t2", path),
                _weight_tree(entry.get("p"), path + ".p") if "p" in entry else _missing(path + ".p"),
                bool(entry.get("directed", False)),
            )
        )
    clamped = {}
    for key, vec in (document.get("clamped") or {}).items():
        node = _node_key(key, f"clamped.{key}")
        if not isinstance(vec, list) or not all(isinstance(v, int) and not isinstance(v, bool) for v in vec):
            raise ValidationError("expected a list of integer counts", f"clamped.{key}")
        clamped[node] = tuple(vec)
    return MrfSpec(n, tuple(bins), source, tuple(two), tuple(three), clamped)


def _missing(path):
    raise ValidationError("missing field", path)


def load_spec_file(path) -> MrfSpec:
    """Read and validate a spec file. I/O failures propagate as ``OSError``."""
    return load_spec(Path(path).read_text())


# ---------------------------------------------------------------------------
# classical evaluation


def creation_weights(spec: MrfSpec, s: int, occ) -> tuple:
    """Unnormalized weights for creating a sample in each bin of node ``s``.

    ``w_i = source_i * prod_t sum_k p[i][k] n_k^t * prod_(t1,t2) sum_k1,k2 p[i][k1][k2] n_k1^t1 n_k2^t2``
    with counts read from ``occ``. Raises :class:`ModelError` if every weight is zero.
    """
    occ = as_occupancy(occ)
    if s in spec.clamped:
        raise ModelError(f"node {s} is clamped")
    if not 1 <= s <= spec.num_nodes:
        raise IndexError(f"node {s} out of range 1..{spec.num_nodes}")
    out = []
    src = spec.source_weights(s)
    pairs = spec.pair_factors(s)
    triples = spec.triple_factors(s)
    for i in range(spec.bins[s - 1]):
        w = src[i]
        for t, table in pairs:
            if w == 0:
                break
            row = table[i]
            w = w * sum((row[k] * n for k, n in enumerate(occ[t - 1]) if n), 0)
        for t1, t2, table in triples:
            if w == 0:
                break
            plane = table[i]
            acc = 0
            for k1, n1 in enumerate(occ[t1 - 1]):
                if n1:
                    for k2, n2 in enumerate(occ[t2 - 1]):
                        if n2:
                            acc = acc + plane[k1][k2] * n1 * n2
            w = w * acc
        out.append(w)
    if not any(w > 0 for w in out):
        raise ModelError(f"no admissible creation bin at node {s} in state {occ}")
    return tuple(out)


def single_sample_bins(occ: Occupancy) -> tuple:
    """0-based occupied bin per node, for states with exactly one sample per node."""
    out = []
    for node, row in enumerate(occ, 1):
        if sum(row) != 1:
            raise ModeError(f"node {node} holds {sum(row)} samples; joint weights need exactly one")
        out.append(row.index(1))
    return tuple(out)


def hce_joint_weight(spec: MrfSpec, occ) -> Scalar:
    """Unnormalized product-form weight of a single-sample joint state.

    Multiplies source factors and every clique factor once per clique.
    """
    occ = as_occupancy(occ)
    if len(occ) != spec.num_nodes or tuple(len(r) for r in occ) != spec.bins:
        raise ValueError(f"occupancy {occ} does not match layout {spec.bins}")
    if not spec.has_product_form:
        raise ModelError("model has directed cliques; it has no product-form joint weight")
    x = single_sample_bins(occ)
    w: Scalar = 1
    for s in range(1, spec.num_nodes + 1):
        w = w * spec.source_weights(s)[x[s - 1]]
    for c in spec.two_cliques:
        w = w * c.p[x[c.s - 1]][x[c.t - 1]]
    for c in spec.three_cliques:
        w = w * c.p[x[c.s - 1]][x[c.t1 - 1]][x[c.t2 - 1]]
    return w


def single_sample_states(spec: MrfSpec):
    """All joint states with one sample per node (clamped nodes fixed), in lexicographic order."""
    per_node = []
    for s in range(1, spec.num_nodes + 1):
        m = spec.bins[s - 1]
        if s in spec.clamped:
            per_node.append([spec.clamped[s]])
        else:
            per_node.append([tuple(int(k == i) for k in range(m)) for i in range(m)])
    for combo in itertools.product(*per_node):
        yield tuple(combo)


def hce_partition_function(spec: MrfSpec) -> Scalar:
    """Sum of :func:`hce_joint_weight` over all single-sample joint states."""
    return sum((hce_joint_weight(spec, occ) for occ in single_sample_states(spec)), 0)
