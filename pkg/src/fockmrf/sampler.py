"""Stochastic annihilate-then-create updates, chains, traces and estimators.

RNG contract: each chain draws from ``numpy.random.Generator(PCG64)`` seeded
with ``SeedSequence([seed mod 2**64, chain_index])``. Every update consumes
exactly three ``Generator.random()`` doubles, in order: node choice, sample
to annihilate, bin to create. Doubles are fetched in blocks, which does not
change the sequence: PCG64 turns each 64-bit output into one double.
Initial random placement, when requested, draws one double per sample before
the first update.

Weights are evaluated in double precision.
"""

from __future__ import annotations

import csv
import io
import json
from bisect import bisect_right
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from itertools import accumulate
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .algebra import Occupancy, as_occupancy
from .errors import ModelError
from .exact import SCHEMES, Distribution, StateSpace

BLOCK = 4096
SEED_MASK = (1 << 64) - 1
BATCHES = 20


def make_rng(seed: int, chain_index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed & SEED_MASK, chain_index])))


class _Stepper:
    """Float tables of a spec, laid out for fast single-site updates on list-of-lists state."""

    def __init__(self, spec):
        self.spec = spec
        self.nodes = spec.unclamped_nodes
        self.bins = spec.bins
        self.src = {s: [float(w) for w in spec.source_weights(s)] for s in self.nodes}
        self.pairs = {
            s: [(t - 1, [[float(x) for x in row] for row in table]) for t, table in spec.pair_factors(s)]
            for s in self.nodes
        }
        self.triples = {
            s: [
                (t1 - 1, t2 - 1, [[[float(x) for x in r] for r in plane] for plane in table])
                for t1, t2, table in spec.triple_factors(s)
            ]
            for s in self.nodes
        }

    def weights(self, state: list, s: int) -> list:
        w = list(self.src[s])
        m = len(w)
        for t, table in self.pairs[s]:
            occ = state[t]
            for i in range(m):
                if w[i]:
                    row = table[i]
                    w[i] *= sum(row[k] * n for k, n in enumerate(occ) if n)
        for t1, t2, table in self.triples[s]:
            o1, o2 = state[t1], state[t2]
            for i in range(m):
                if w[i]:
                    plane = table[i]
                    acc = 0.0
                    for k1, n1 in enumerate(o1):
                        if n1:
                            r = plane[k1]
                            acc += n1 * sum(r[k2] * n2 for k2, n2 in enumerate(o2) if n2)
                    w[i] *= acc
        return w

    def update(self, state: list, s: int, u_sample: float, u_bin: float) -> None:
        """Move one sample at node ``s`` in place; a node without samples is left alone."""
        block = state[s - 1]
        n = sum(block)
        if n == 0:
            return
        j = bisect_right(list(accumulate(block)), u_sample * n)
        block[j] -= 1
        w = self.weights(state, s)
        total = sum(w)
        if not total > 0:
            block[j] += 1
            raise ModelError(f"no admissible creation bin at node {s} in state {_freeze(state)}")
        i = min(bisect_right(list(accumulate(w)), u_bin * total), len(w) - 1)
        while not w[i]:
            i -= 1
        block[i] += 1


def _freeze(state: list) -> Occupancy:
    return tuple(tuple(r) for r in state)


def _check_state(spec, occ) -> Occupancy:
    occ = as_occupancy(occ)
    if tuple(len(r) for r in occ) != spec.bins:
        raise ValueError(f"occupancy {occ} does not match layout {spec.bins}")
    for s, fixed in spec.clamped.items():
        if occ[s - 1] != fixed:
            raise ValueError(f"node {s} is clamped to {list(fixed)} but the state has {list(occ[s - 1])}")
    return occ


def step(state, spec, rng: np.random.Generator, node: int | None = None) -> Occupancy:
    """One update: pick a node (uniformly unless given), annihilate a uniform sample, recreate it.

    Consumes three uniforms from ``rng``.
    """
    occ = _check_state(spec, state)
    stepper = _Stepper(spec)
    u = rng.random(3)
    if node is None:
        node = stepper.nodes[int(u[0] * len(stepper.nodes))]
    elif node not in stepper.nodes:
        raise ValueError(f"node {node} is clamped or out of range")
    work = [list(r) for r in occ]
    stepper.update(work, node, float(u[1]), float(u[2]))
    return _freeze(work)


@dataclass(frozen=True)
class ChainConfig:
    """``steps`` counts every update, burn-in included; records are kept every ``thin`` updates after it.

    ``initial`` is an explicit occupancy or ``"random"`` (then ``totals`` is required).
    ``burn_in=None`` means ten sweeps per sample: ``10 * total samples * unclamped nodes`` updates.
    """

    seed: int
    steps: int
    burn_in: int | None = None
    thin: int = 1
    scheme: str = "random-scan"
    initial: object = "random"
    totals: tuple | None = None
    chain_index: int = 0

    def resolved(self, spec) -> "ChainConfig":
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.thin < 1:
            raise ValueError("thin must be at least 1")
        initial = self.initial
        totals = self.totals
        if isinstance(initial, str):
            if initial != "random":
                raise ValueError(f"initial must be an occupancy or 'random', got {initial!r}")
            if totals is None:
                raise ValueError("random initial state needs per-node totals")
            totals = tuple(int(n) for n in totals)
            if len(totals) != spec.num_nodes:
                raise ValueError(f"{len(totals)} totals given for {spec.num_nodes} nodes")
        else:
            initial = _check_state(spec, initial)
            totals = tuple(sum(r) for r in initial)
        for s, fixed in spec.clamped.items():
            if totals[s - 1] != sum(fixed):
                raise ValueError(f"total at clamped node {s} must be {sum(fixed)}")
        burn_in = self.burn_in
        if burn_in is None:
            burn_in = 10 * sum(totals) * len(spec.unclamped_nodes)
        if burn_in < 0 or self.steps <= burn_in:
            raise ValueError(f"steps ({self.steps}) must exceed burn-in ({burn_in})")
        return replace(self, burn_in=burn_in, initial=initial, totals=totals)

    def to_json(self) -> dict:
        d = asdict(self)
        if not isinstance(self.initial, str):
            d["initial"] = [list(r) for r in self.initial]
        if self.totals is not None:
            d["totals"] = list(self.totals)
        return d


def _random_initial(spec, totals, draw) -> list:
    state = []
    for s in range(1, spec.num_nodes + 1):
        if s in spec.clamped:
            state.append(list(spec.clamped[s]))
            continue
        m = spec.bins[s - 1]
        row = [0] * m
        for _ in range(totals[s - 1]):
            row[min(int(draw() * m), m - 1)] += 1
        state.append(row)
    return state


class _Uniforms:
    def __init__(self, rng):
        self.rng = rng
        self.buf = []
        self.pos = 0

    def __call__(self) -> float:
        if self.pos == len(self.buf):
            self.buf = self.rng.random(3 * BLOCK).tolist()
            self.pos = 0
        self.pos += 1
        return self.buf[self.pos - 1]


@dataclass
class ChainTrace:
    """Recorded states after burn-in, one row per record, columns ordered (node, bin)."""

    config: ChainConfig
    bins: tuple
    steps: np.ndarray
    records: np.ndarray
    sums: np.ndarray
    updates: int
    accepted: int
    initial: Occupancy
    spec_document: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.records)

    def occupancy(self, r: int) -> Occupancy:
        row = self.records[r].tolist()
        out, pos = [], 0
        for m in self.bins:
            out.append(tuple(row[pos : pos + m]))
            pos += m
        return tuple(out)

    def states(self):
        for r in range(len(self.records)):
            yield self.occupancy(r)

    @property
    def columns(self) -> list:
        return [f"node{s}_bin{i}" for s, m in enumerate(self.bins, 1) for i in range(1, m + 1)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step"] + self.columns)
        for st, row in zip(self.steps.tolist(), self.records.tolist()):
            writer.writerow([st] + row)
        return buf.getvalue()

    def sidecar(self) -> dict:
        return {
            "config": self.config.to_json(),
            "seed": self.config.seed,
            "rng": "numpy PCG64, SeedSequence([seed mod 2**64, chain_index]), 3 uniforms per update",
            "bins": list(self.bins),
            "records": len(self.records),
            "updates": self.updates,
            "accepted": self.accepted,
            "initial": [list(r) for r in self.initial],
            "spec": self.spec_document,
        }

    def write(self, path) -> Path:
        """Write ``path`` (CSV) and ``path`` with suffix ``.json`` (sidecar)."""
        path = Path(path)
        path.write_text(self.to_csv())
        side = path.with_suffix(".json")
        side.write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n")
        return side


def run(spec, config: ChainConfig) -> ChainTrace:
    """Run one chain; identical ``(spec, config)`` give identical traces."""
    cfg = config.resolved(spec)
    rng = make_rng(cfg.seed, cfg.chain_index)
    draw = _Uniforms(rng)
    if isinstance(cfg.initial, str):
        state = _random_initial(spec, cfg.totals, draw)
    else:
        state = [list(r) for r in cfg.initial]
    initial = _freeze(state)
    stepper = _Stepper(spec)
    nodes = stepper.nodes
    width = len(nodes)
    n_rec = (cfg.steps - cfg.burn_in) // cfg.thin
    records = np.zeros((n_rec, sum(spec.bins)), dtype=np.int64)
    rec_steps = np.zeros(n_rec, dtype=np.int64)
    r = 0
    for t in range(cfg.steps):
        u0, u1, u2 = draw(), draw(), draw()
        s = nodes[int(u0 * width)] if cfg.scheme == "random-scan" else nodes[t % width]
        stepper.update(state, s, u1, u2)
        done = t + 1
        if done > cfg.burn_in and (done - cfg.burn_in) % cfg.thin == 0 and r < n_rec:
            records[r] = [n for row in state for n in row]
            rec_steps[r] = done
            r += 1
    return ChainTrace(
        config=cfg,
        bins=spec.bins,
        steps=rec_steps,
        records=records,
        sums=records.sum(axis=0),
        updates=cfg.steps,
        accepted=cfg.steps,
        initial=initial,
        spec_document=spec.to_document(),
    )


def _run_indexed(args):
    spec, config = args
    return run(spec, config)


def run_chains(spec, config: ChainConfig, chains: int, workers: int | None = None) -> list:
    """Run ``chains`` independent chains (chain indices 0..k-1) in parallel processes."""
    if chains < 1:
        raise ValueError("chains must be at least 1")
    configs = [replace(config, chain_index=config.chain_index + c) for c in range(chains)]
    if chains == 1:
        return [run(spec, configs[0])]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_indexed, [(spec, c) for c in configs]))


def merge_traces(traces: Sequence[ChainTrace]) -> np.ndarray:
    """Stack the records of several chains."""
    return np.concatenate([t.records for t in traces], axis=0)


# ---------------------------------------------------------------------------
# estimators


def _records(trace) -> np.ndarray:
    if isinstance(trace, ChainTrace):
        return trace.records
    if isinstance(trace, (list, tuple)) and trace and isinstance(trace[0], ChainTrace):
        return merge_traces(trace)
    return np.asarray(trace)


def empirical_distribution(trace, space: StateSpace) -> Distribution:
    """Visit frequencies of the recorded states over ``space``."""
    records = _records(trace)
    flat_index = {tuple(n for row in occ for n in row): i for i, occ in enumerate(space.states)}
    rows, counts = np.unique(records, axis=0, return_counts=True)
    freq = np.zeros(len(space))
    for row, c in zip(rows.tolist(), counts.tolist()):
        key = tuple(row)
        if key not in flat_index:
            raise ValueError(f"recorded state {key} is not in the state space")
        freq[flat_index[key]] = c
    return Distribution(space, tuple((freq / freq.sum()).tolist()))


class Estimate(NamedTuple):
    mean: np.ndarray
    naive_se: np.ndarray
    batch_se: np.ndarray


def estimate(trace, statistic: Callable[[Occupancy], Sequence[float]] | None = None, bins: Sequence[int] | None = None,
             batches: int = BATCHES) -> Estimate:
    """Mean of a statistic with naive and batch-means standard errors.

    The default statistic is the raw record (per-bin counts). Batch means
    split the series into ``batches`` contiguous blocks, which absorbs the
    correlation between successive records.
    """
    records = _records(trace)
    if statistic is None:
        values = records.astype(float)
    else:
        if bins is None:
            if not isinstance(trace, ChainTrace):
                raise ValueError("bins are required to decode raw records")
            bins = trace.bins
        splits = np.cumsum(bins)[:-1]
        values = np.array(
            [np.atleast_1d(statistic(tuple(tuple(p) for p in np.split(row, splits)))) for row in records], dtype=float
        )
    n = len(values)
    if n < batches:
        raise ValueError(f"need at least {batches} records for batch means, got {n}")
    mean = values.mean(axis=0)
    naive = values.std(axis=0, ddof=1) / np.sqrt(n)
    size = n // batches
    means = values[: size * batches].reshape(batches, size, -1).mean(axis=1)
    batch = means.std(axis=0, ddof=1) / np.sqrt(batches)
    return Estimate(mean, naive, batch)


__all__ = [
    "BLOCK",
    "BATCHES",
    "ChainConfig",
    "ChainTrace",
    "Estimate",
    "make_rng",
    "step",
    "run",
    "run_chains",
    "merge_traces",
    "empirical_distribution",
    "estimate",
]
