import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fockmrf.errors import CapacityError, ConvergenceError, ReducibilityError
from fockmrf.exact import (
    TransitionKernel,
    build_kernel,
    check_equilibrium_multinomial,
    communication_classes,
    enumerate_states,
    expected_statistic,
    hce_distribution,
    multinomial_distribution,
    multinomial_state,
    stationary_distribution,
)
from fockmrf.model import creation_weights, load_spec
from fockmrf.update import build_mrf_H, build_single_node_H

from conftest import all_occupancies, chain_document, pairwise_specs, positive_fractions

half = Fraction(1, 2)


def eig_stationary(dense):
    """Left Perron vector via a dense eigensolver; oracle only."""
    vals, vecs = np.linalg.eig(dense.T)
    v = np.real(vecs[:, np.argmin(np.abs(vals - 1))])
    return v / v.sum()


# -- state spaces --------------------------------------------------------------


def test_enumeration_examples():
    assert enumerate_states([2], [2]).states == [((2, 0),), ((1, 1),), ((0, 2),)]
    assert enumerate_states([4], [0]).states == [((0, 0, 0, 0),)]
    space = enumerate_states([2, 3], [1, 2])
    assert len(space) == 12
    assert sorted(space.states) == sorted(
        occ for occ in all_occupancies((2, 3), 3) if sum(occ[0]) == 1 and sum(occ[1]) == 2
    )


@given(st.lists(st.integers(1, 3), min_size=1, max_size=3), st.data())
def test_enumeration_is_complete_and_ordered(bins, data):
    totals = [data.draw(st.integers(0, 3)) for _ in bins]
    space = enumerate_states(bins, totals)
    expected = math.prod(math.comb(n + m - 1, m - 1) for m, n in zip(bins, totals))
    assert len(space) == expected == len(set(space.states))
    flat = [tuple(x for row in occ for x in row) for occ in space.states]
    assert flat == sorted(flat, reverse=True)
    assert all(space.index(occ) == i for i, occ in enumerate(space.states))


def test_capacity_guard_env(monkeypatch):
    monkeypatch.setenv("FOCKMRF_MAX_STATES", "5")
    with pytest.raises(CapacityError) as err:
        enumerate_states([3], [3])
    assert err.value.size == 10


def test_clamped_state_space():
    spec = load_spec({
        "nodes": 2, "bins": [2, 2],
        "two_cliques": [{"s": 1, "t": 2, "p": [[1, 2], [3, 4]]}],
        "clamped": {"2": [1, 1]},
    })
    space = enumerate_states(spec, [2, 2])
    assert len(space) == 3
    assert all(occ[1] == (1, 1) for occ in space)
    with pytest.raises(ValueError):
        enumerate_states(spec, [2, 3])


# -- kernels --------------------------------------------------------------------


def test_kernel_single_sample_coin():
    space = enumerate_states([2], [1])
    K = build_kernel(build_single_node_H([half, half]), space)
    assert K.rows == ({0: half, 1: half}, {0: half, 1: half})


def test_kernel_two_samples_from_same_bin():
    p1, p2 = Fraction(1, 5), Fraction(4, 5)
    space = enumerate_states([2], [2])
    K = build_kernel(build_single_node_H([p1, p2]), space)
    assert K.row(space.index(((2, 0),))) == {0: p1, 1: p2}


def test_kernel_annihilates_uniform_sample():
    p = [Fraction(1, 6), Fraction(1, 3), Fraction(1, 2)]
    space = enumerate_states([3], [3])
    K = build_kernel(build_single_node_H(p), space)
    src = ((2, 1, 0),)
    row = K.row(space.index(src))
    expected = {}
    for j, nj in enumerate(src[0]):
        if not nj:
            continue
        for i in range(3):
            occ = list(src[0])
            occ[j] -= 1
            occ[i] += 1
            key = space.index((tuple(occ),))
            expected[key] = expected.get(key, 0) + Fraction(nj, 3) * p[i]
    assert row == expected


@given(pairwise_specs())
def test_single_sample_rows_equal_conditionals(spec):
    space = enumerate_states(spec, [1] * spec.num_nodes)
    K = build_kernel(build_mrf_H(spec), space)
    for s, rows in K.site_rows.items():
        for i, occ in enumerate(space.states):
            w = creation_weights(spec, s, occ)
            z = sum(w)
            expected = {}
            for b, wb in enumerate(w):
                if wb:
                    new = list(occ)
                    new[s - 1] = tuple(int(k == b) for k in range(spec.bins[s - 1]))
                    expected[space.index(tuple(new))] = wb / z
            assert rows[i] == expected


@given(pairwise_specs(max_nodes=2, max_bins=2), st.sampled_from(["random-scan", "sequential-scan"]))
def test_rows_are_stochastic(spec, scheme):
    space = enumerate_states(spec, [2] * spec.num_nodes)
    K = build_kernel(build_mrf_H(spec), space, scheme)
    for row in K.rows:
        assert sum(row.values()) == 1
        assert all(v > 0 for v in row.values())


def test_clamped_occupancy_never_moves():
    spec = load_spec({
        "nodes": 3, "bins": [2, 2, 2],
        "two_cliques": [{"s": 1, "t": 2, "p": [[1, 2], [3, 4]]}, {"s": 2, "t": 3, "p": [[2, 1], [1, 2]]}],
        "clamped": {"3": [2, 0]},
    })
    space = enumerate_states(spec, [2, 2, 2])
    K = build_kernel(build_mrf_H(spec), space)
    for row in K.rows:
        for j in row:
            assert space[j][2] == (2, 0)


def test_unknown_scheme():
    with pytest.raises(ValueError):
        build_kernel(build_single_node_H([1, 1]), enumerate_states([2], [1]), "checkerboard")


# -- stationary distribution ------------------------------------------------------


def test_identity_kernel_is_reducible():
    space = enumerate_states([2], [2])
    K = TransitionKernel(space, "random-scan", tuple({i: 1} for i in range(3)), {})
    with pytest.raises(ReducibilityError) as err:
        stationary_distribution(K)
    assert len(err.value.classes) == 3


def test_binomial_stationary():
    space = enumerate_states([2], [2])
    pi = stationary_distribution(build_kernel(build_single_node_H([half, half]), space))
    assert np.allclose(pi.array, [0.25, 0.5, 0.25], atol=1e-12)


def test_two_node_single_sample_matches_hce(two_node_spec):
    space = enumerate_states(two_node_spec, [1, 1])
    pi = stationary_distribution(build_kernel(build_mrf_H(two_node_spec), space))
    hce = hce_distribution(two_node_spec)
    assert hce.space.states == space.states
    assert np.abs(pi.array - hce.array).max() < 1e-10


def test_periodic_chain_still_converges():
    space = enumerate_states([2], [1])
    K = TransitionKernel(space, "random-scan", ({1: 1}, {0: 1}), {})
    comm = communication_classes(K)
    assert comm.period == 2
    assert np.allclose(stationary_distribution(K).array, [0.5, 0.5])


def test_transient_states_get_zero_mass():
    space = enumerate_states([3], [1])
    K = TransitionKernel(space, "random-scan", ({1: 1}, {1: half, 2: half}, {1: half, 2: half}), {})
    pi = stationary_distribution(K)
    assert pi.probs[0] == 0
    assert np.allclose(pi.array, [0, 0.5, 0.5])


def test_iteration_cap():
    space = enumerate_states([2], [2])
    K = build_kernel(build_single_node_H([Fraction(1, 10), Fraction(9, 10)]), space)
    with pytest.raises(ConvergenceError):
        stationary_distribution(K, max_iter=1)


@given(pairwise_specs(max_nodes=2, max_bins=2), st.sampled_from(["random-scan", "sequential-scan"]))
def test_stationary_agrees_with_eigensolver(spec, scheme):
    space = enumerate_states(spec, [2] * spec.num_nodes)
    K = build_kernel(build_mrf_H(spec), space, scheme)
    pi = stationary_distribution(K)
    assert np.abs(pi.array - eig_stationary(K.to_dense())).max() < 1e-9
    assert np.abs(pi.array @ K.to_dense() - pi.array).sum() < 1e-11


@given(pairwise_specs(max_nodes=3, max_bins=2))
def test_single_sample_stationary_is_hce(spec):
    space = enumerate_states(spec, [1] * spec.num_nodes)
    for scheme in ("random-scan", "sequential-scan"):
        pi = stationary_distribution(build_kernel(build_mrf_H(spec), space, scheme))
        assert np.abs(pi.array - hce_distribution(spec).array).max() < 1e-10


# -- equilibrium law ----------------------------------------------------------------


def test_equilibrium_examples():
    r = check_equilibrium_multinomial([half, half], 2, 2)
    assert (r.eigenvalue, r.residual, r.ok) == (2, 0, True)
    p = [Fraction(k, 15) for k in (1, 2, 3, 4, 5)]
    r = check_equilibrium_multinomial(p, 5, 6)
    assert (r.eigenvalue, r.residual, r.ok) == (6, 0, True)


def test_single_sample_equilibrium_state():
    p = [Fraction(1, 7), Fraction(6, 7)]
    assert multinomial_state(p, 1).as_dict() == {((1, 0),): p[0], ((0, 1),): p[1]}
    assert check_equilibrium_multinomial(p, 2, 1).eigenvalue == 1


def test_unnormalized_weights_are_normalized():
    assert check_equilibrium_multinomial([1, 2, 3], 3, 4).ok


def test_perturbed_state_fails():
    psi = multinomial_state([half, half], 3)
    psi = psi + psi.scale(0)  # copy
    first = next(iter(psi.occupancies()))
    from fockmrf.algebra import MixedState

    bad = psi + MixedState.pure(first, 1)
    r = check_equilibrium_multinomial([half, half], 2, 3, bad)
    assert not r.ok
    assert r.residual > 0
    assert r.offending is not None


@given(st.integers(2, 5), st.integers(1, 6), st.data())
def test_eigenvalue_law(m, n, data):
    p = [data.draw(positive_fractions) for _ in range(m)]
    r = check_equilibrium_multinomial(p, m, n)
    assert r.ok and r.eigenvalue == n and r.residual == 0


@given(st.integers(2, 4), st.integers(1, 5), st.data())
def test_multinomial_is_exactly_invariant(m, n, data):
    p = [data.draw(positive_fractions) for _ in range(m)]
    space = enumerate_states([m], [n])
    K = build_kernel(build_single_node_H(p), space)
    pi = multinomial_distribution(space, p)
    assert tuple(K.left_apply(pi.probs)) == pi.probs


# -- statistics -----------------------------------------------------------------------


def test_expected_statistics():
    p = [Fraction(1, 2), Fraction(1, 3), Fraction(1, 6)]
    space = enumerate_states([3], [4])
    pi = multinomial_distribution(space, p)
    assert expected_statistic(pi, lambda occ: [Fraction(k, 4) for k in occ[0]]) == tuple(p)
    target = ((2, 1, 1),)
    assert expected_statistic(pi, lambda occ: int(occ == target)) == pi.prob(target)
    assert expected_statistic(pi, lambda occ: sum(occ[0])) == 4


def test_chain_document_helper_builds_valid_chain():
    spec = load_spec(chain_document([[[1, 2], [3, 4]], [[1, 1], [2, 1]]], [2, 2, 2]))
    assert spec.neighborhood(2) == (1, 3)


def test_empty_node_is_a_self_loop():
    spec = load_spec({"nodes": 2, "bins": [2, 2], "source": {"2": [1, 3]}})
    space = enumerate_states(spec, [0, 1])
    K = build_kernel(build_mrf_H(spec), space)
    assert K.site_rows[1] == ({0: 1}, {1: 1})
    assert K.site_rows[2] == ({0: Fraction(1, 4), 1: Fraction(3, 4)},) * 2
    assert stationary_distribution(K).probs == pytest.approx((0.25, 0.75))
