import itertools
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from fockmrf.algebra import OperatorExpr
from fockmrf.model import load_spec

settings.register_profile(
    "default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

fractions = st.fractions(min_value=Fraction(-3), max_value=Fraction(3), max_denominator=6)
positive_fractions = st.fractions(min_value=Fraction(1, 6), max_value=Fraction(4), max_denominator=6)


@st.composite
def layouts(draw, max_nodes=2, max_bins=3):
    n = draw(st.integers(1, max_nodes))
    return tuple(draw(st.integers(1, max_bins)) for _ in range(n))


@st.composite
def occupancies(draw, layout, max_total=4):
    out = []
    budget = max_total
    for m in layout:
        row = []
        for _ in range(m):
            k = draw(st.integers(0, budget))
            budget -= k
            row.append(k)
        out.append(tuple(row))
    return tuple(out)


@st.composite
def factors(draw, layout):
    node = draw(st.integers(1, len(layout)))
    b = draw(st.integers(1, layout[node - 1]))
    power = draw(st.integers(1, 2))
    if draw(st.booleans()):
        return OperatorExpr.create(node, b, power)
    return OperatorExpr.annihilate(node, b, power)


@st.composite
def expressions(draw, layout, max_terms=3, max_len=4):
    expr = OperatorExpr.zero()
    for _ in range(draw(st.integers(1, max_terms))):
        term = OperatorExpr.identity(draw(fractions))
        for _ in range(draw(st.integers(0, max_len))):
            term = term * draw(factors(layout))
        expr = expr + term
    return expr


def random_table(draw, rows, cols):
    return [[draw(positive_fractions) for _ in range(cols)] for _ in range(rows)]


@st.composite
def pairwise_documents(draw, max_nodes=3, max_bins=3):
    """Random 2-clique model documents on a connected path plus optional extra edges."""
    n = draw(st.integers(2, max_nodes))
    bins = [draw(st.integers(1, max_bins)) for _ in range(n)]
    edges = [(s, s + 1) for s in range(1, n)]
    if n == 3 and draw(st.booleans()):
        edges.append((1, 3))
    cliques = []
    for s, t in edges:
        table = random_table(draw, bins[s - 1], bins[t - 1])
        cliques.append({"s": s, "t": t, "p": [[str(x) for x in r] for r in table]})
    return {"nodes": n, "bins": bins, "two_cliques": cliques}


def pairwise_specs(**kw):
    return pairwise_documents(**kw).map(load_spec)


def chain_document(tables, bins):
    return {
        "nodes": len(bins),
        "bins": list(bins),
        "two_cliques": [
            {"s": s, "t": s + 1, "p": [[str(x) for x in r] for r in table]} for s, table in enumerate(tables, 1)
        ],
    }


def all_occupancies(layout, total):
    """Every occupancy of ``layout`` with grand total ``total`` (test-side enumeration)."""
    cells = sum(layout)
    out = []
    for combo in itertools.product(range(total + 1), repeat=cells):
        if sum(combo) != total:
            continue
        rows, pos = [], 0
        for m in layout:
            rows.append(tuple(combo[pos : pos + m]))
            pos += m
        out.append(tuple(rows))
    return out


@pytest.fixture
def single_node_spec():
    return load_spec({"nodes": 1, "bins": [4], "source": {"1": [0.4, 0.3, 0.2, 0.1]}})


@pytest.fixture
def two_node_spec():
    return load_spec(
        {"nodes": 2, "bins": [2, 2], "two_cliques": [{"s": 1, "t": 2, "p": [["3/2", "1/2"], ["1/3", 2]]}]}
    )


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
